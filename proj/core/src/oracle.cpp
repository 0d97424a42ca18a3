#include "invdes/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "invdes/rng.hpp"

namespace invdes {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ClosestPoint {
  double px, py, dist;
};

ClosestPoint closest_on_segment(double x, double y, const Segment& s) {
  const double ax = s.a[0], ay = s.a[1];
  const double dx = s.b[0] - ax, dy = s.b[1] - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double px = ax + t * dx, py = ay + t * dy;
  const double ddx = x - px, ddy = y - py;
  return {px, py, std::sqrt(ddx * ddx + ddy * ddy)};
}

double segment_distance(const Segment& s, const Segment& t) {
  double d = closest_on_segment(s.a[0], s.a[1], t).dist;
  d = std::min(d, closest_on_segment(s.b[0], s.b[1], t).dist);
  d = std::min(d, closest_on_segment(t.a[0], t.a[1], s).dist);
  d = std::min(d, closest_on_segment(t.b[0], t.b[1], s).dist);
  return d;
}

}  // namespace

ParticleState step_oracle(const ParticleState& state, const OracleConfig& cfg) {
  const int n = state.num_particles();
  const double* u = state.positions.data().data();
  const double dt = cfg.dt;

  std::vector<double> ax(n, 0.0), ay(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (state.node_types[i] != kFluidNode || state.removed[i]) continue;
    ax[i] = cfg.gravity[0];
    ay[i] = cfg.gravity[1];
  }

  // Pairwise linear repulsion between overlapping active fluid particles.
  const EdgeSet edges = build_radius_edges(state.positions, cfg.interaction_radius);
  for (int k = 0; k < edges.size(); ++k) {
    const int s = edges.senders[k], r = edges.receivers[k];
    if (state.node_types[r] != kFluidNode || state.removed[r]) continue;
    if (state.node_types[s] != kFluidNode || state.removed[s]) continue;
    const double d = edges.dist[k];
    if (d <= 0) continue;
    const double f = cfg.repulsion_stiffness * (cfg.interaction_radius - d);
    // push the receiver away from the sender
    ax[r] += f * edges.rel_disp.at(k, 0) / d;
    ay[r] += f * edges.rel_disp.at(k, 1) / d;
  }

  std::vector<double> new_pos(state.positions.data());
  std::vector<double> new_hist(static_cast<size_t>(n) * 2 * kHistory);
  std::vector<char> removed = state.removed;
  const int hcols = 2 * kHistory;

  for (int i = 0; i < n; ++i) {
    const double* hist = state.velocity_history.data().data() + static_cast<size_t>(i) * hcols;
    double* nh = new_hist.data() + static_cast<size_t>(i) * hcols;
    if (state.node_types[i] != kFluidNode) {
      // static design nodes: identity on position and history
      std::copy(hist, hist + hcols, nh);
      continue;
    }
    if (removed[i]) continue;  // frozen, history zeroed

    double vx = cfg.damping * hist[hcols - 2] + ax[i] * dt;
    double vy = cfg.damping * hist[hcols - 1] + ay[i] * dt;
    double x = u[2 * i] + vx * dt;
    double y = u[2 * i + 1] + vy * dt;

    // non-floor walls of the unit box
    if (x < 0) { x = 0; if (vx < 0) vx = 0; }
    if (x > 1) { x = 1; if (vx > 0) vx = 0; }
    if (y > 1) { y = 1; if (vy > 0) vy = 0; }
    if (!cfg.floor.removes && y < cfg.floor.height) {
      y = cfg.floor.height;
      if (vy < 0) vy = 0;
    }

    // inelastic projection off obstacle segments; repeated passes handle
    // being pushed from one segment into another
    for (int pass = 0; pass < 25; ++pass) {
      bool moved = false;
      for (const Segment& seg : cfg.obstacles) {
        const ClosestPoint cp = closest_on_segment(x, y, seg);
        if (cp.dist >= cfg.collision_radius) continue;
        double nx_, ny_;
        if (cp.dist > 1e-12) {
          nx_ = (x - cp.px) / cp.dist;
          ny_ = (y - cp.py) / cp.dist;
        } else {
          const double sx = seg.b[0] - seg.a[0], sy = seg.b[1] - seg.a[1];
          const double sl = std::sqrt(sx * sx + sy * sy);
          nx_ = sl > 0 ? -sy / sl : 0.0;
          ny_ = sl > 0 ? sx / sl : 1.0;
        }
        x = cp.px + nx_ * cfg.collision_radius;
        y = cp.py + ny_ * cfg.collision_radius;
        const double vn = vx * nx_ + vy * ny_;
        if (vn < 0) {
          vx -= vn * nx_;
          vy -= vn * ny_;
        }
        moved = true;
      }
      if (!moved) break;
    }

    if (std::abs(x) > 10 || std::abs(y) > 10)
      throw NumericError("oracle divergence: particle " + std::to_string(i) +
                         " escaped the scene");

    new_pos[2 * i] = x;
    new_pos[2 * i + 1] = y;
    for (int h = 0; h + 2 < hcols; ++h) nh[h] = hist[h + 2];
    nh[hcols - 2] = vx;
    nh[hcols - 1] = vy;
    if (cfg.floor.removes && y <= cfg.floor.height) removed[i] = 1;
  }

  return ParticleState(Tensor({n, 2}, std::move(new_pos)),
                       Tensor({n, hcols}, std::move(new_hist)), state.node_types,
                       std::move(removed));
}

std::vector<ParticleState> rollout_oracle(const ParticleState& initial,
                                          const OracleConfig& cfg, int num_steps) {
  std::vector<ParticleState> out;
  out.reserve(num_steps + 1);
  out.push_back(initial);
  for (int t = 0; t < num_steps; ++t) {
    try {
      out.push_back(step_oracle(out.back(), cfg));
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(t));
    }
  }
  return out;
}

namespace {

void append_segment_particles(const Segment& seg, double spacing, std::vector<double>& pos,
                              std::vector<int>& types) {
  const double dx = seg.b[0] - seg.a[0], dy = seg.b[1] - seg.a[1];
  const double len = std::sqrt(dx * dx + dy * dy);
  const int m = std::max(2, static_cast<int>(std::round(len / spacing)) + 1);
  for (int i = 0; i < m; ++i) {
    const double t = static_cast<double>(i) / (m - 1);
    pos.push_back(seg.a[0] + t * dx);
    pos.push_back(seg.a[1] + t * dy);
    types.push_back(kDesignNode);
  }
}

}  // namespace

ParticleState make_training_scene(const DatasetGenConfig& cfg, std::uint64_t scene_seed,
                                  std::vector<Segment>* obstacles_out) {
  Rng rng(scene_seed);

  // Fluid block: resample dimensions until the particle count fits the range.
  int nx = 0, ny = 0;
  for (int attempt = 0; attempt < 256; ++attempt) {
    const double w = rng.uniform(0.08, 0.32);
    const double h = rng.uniform(0.08, 0.32);
    nx = static_cast<int>(std::floor(w / cfg.fluid_spacing));
    ny = static_cast<int>(std::floor(h / cfg.fluid_spacing));
    const int count = nx * ny;
    if (count >= cfg.min_particles && count <= cfg.max_particles) break;
    nx = ny = 0;
  }
  if (nx == 0) {
    nx = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.min_particles))));
    ny = nx;
  }
  const double bw = nx * cfg.fluid_spacing, bh = ny * cfg.fluid_spacing;
  const double x0 = rng.uniform(0.05, 0.95 - bw);
  const double y0 = rng.uniform(0.55, 0.95 - bh);

  std::vector<double> pos;
  std::vector<int> types;
  const double jitter = 0.1 * cfg.fluid_spacing;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const double jx = rng.uniform(-jitter, jitter);
      const double jy = rng.uniform(-jitter, jitter);
      pos.push_back(x0 + (ix + 0.5) * cfg.fluid_spacing + jx);
      pos.push_back(y0 + (iy + 0.5) * cfg.fluid_spacing + jy);
      types.push_back(kFluidNode);
    }

  // 1..4 random straight segments, rejection-sampled to stay separated so
  // the projection solver never sees crossing obstacles.
  const int want = cfg.min_obstacles + rng.uniform_int(cfg.max_obstacles - cfg.min_obstacles + 1);
  std::vector<Segment> obstacles;
  const double min_sep = 4 * cfg.oracle.collision_radius + 0.02;
  for (int attempt = 0; attempt < 512 && static_cast<int>(obstacles.size()) < want; ++attempt) {
    const double cx = rng.uniform(0.12, 0.88);
    const double cy = rng.uniform(0.1, 0.5);
    const double ang = rng.uniform(-1.0, 1.0);
    const double hl = rng.uniform(0.05, 0.18);
    Segment seg{{cx - hl * std::cos(ang), cy - hl * std::sin(ang)},
                {cx + hl * std::cos(ang), cy + hl * std::sin(ang)}};
    if (seg.a[0] < 0.03 || seg.a[0] > 0.97 || seg.b[0] < 0.03 || seg.b[0] > 0.97) continue;
    if (seg.a[1] < 0.05 || seg.a[1] > 0.6 || seg.b[1] < 0.05 || seg.b[1] > 0.6) continue;
    bool ok = true;
    for (const Segment& other : obstacles)
      if (segment_distance(seg, other) < min_sep) ok = false;
    if (ok) obstacles.push_back(seg);
  }
  for (const Segment& seg : obstacles)
    append_segment_particles(seg, cfg.obstacle_spacing, pos, types);
  if (obstacles_out) *obstacles_out = obstacles;

  const int n = static_cast<int>(types.size());
  return ParticleState::at_rest(Tensor({n, 2}, std::move(pos)), std::move(types));
}

DatasetManifest generate_dataset(const DatasetGenConfig& cfg, const std::string& out_dir) {
  if (cfg.num_trajectories <= 0)
    throw ConfigError("generate_dataset: trajectory count must be positive");
  fs::create_directories(out_dir);

  DatasetManifest manifest;
  manifest.seed = cfg.seed;
  manifest.count = cfg.num_trajectories;
  manifest.config_json = dataset_config_json(cfg);

  for (int i = 0; i < cfg.num_trajectories; ++i) {
    std::vector<Segment> obstacles;
    const ParticleState scene =
        make_training_scene(cfg, mix_seed(cfg.seed, static_cast<std::uint64_t>(i)), &obstacles);
    OracleConfig oracle = cfg.oracle;
    oracle.obstacles = obstacles;
    const std::vector<ParticleState> states = rollout_oracle(scene, oracle, cfg.num_steps);

    Trajectory traj;
    traj.dt = oracle.dt;
    traj.radius = oracle.interaction_radius;
    traj.node_types = scene.node_types;
    traj.frames.reserve(states.size());
    for (const ParticleState& s : states) traj.frames.push_back(s.positions.detached());

    char name[32];
    std::snprintf(name, sizeof(name), "traj_%05d.idtraj", i);
    write_trajectory((fs::path(out_dir) / name).string(), traj);
    manifest.files.push_back(name);
  }

  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  write_manifest(manifest_path, manifest);
  manifest.directory = out_dir;
  return manifest;
}

std::string dataset_config_json(const DatasetGenConfig& cfg) {
  json j;
  j["num_trajectories"] = cfg.num_trajectories;
  j["min_particles"] = cfg.min_particles;
  j["max_particles"] = cfg.max_particles;
  j["min_obstacles"] = cfg.min_obstacles;
  j["max_obstacles"] = cfg.max_obstacles;
  j["num_steps"] = cfg.num_steps;
  j["fluid_spacing"] = cfg.fluid_spacing;
  j["obstacle_spacing"] = cfg.obstacle_spacing;
  j["oracle"] = {{"gravity", cfg.oracle.gravity},
                 {"interaction_radius", cfg.oracle.interaction_radius},
                 {"repulsion_stiffness", cfg.oracle.repulsion_stiffness},
                 {"damping", cfg.oracle.damping},
                 {"collision_radius", cfg.oracle.collision_radius},
                 {"dt", cfg.oracle.dt},
                 {"floor_removes", cfg.oracle.floor.removes},
                 {"floor_height", cfg.oracle.floor.height}};
  return j.dump();
}

DatasetGenConfig dataset_config_from_json(const std::string& config_json) {
  const json j = json::parse(config_json);
  DatasetGenConfig cfg;
  cfg.num_trajectories = j.value("num_trajectories", cfg.num_trajectories);
  cfg.min_particles = j.value("min_particles", cfg.min_particles);
  cfg.max_particles = j.value("max_particles", cfg.max_particles);
  cfg.min_obstacles = j.value("min_obstacles", cfg.min_obstacles);
  cfg.max_obstacles = j.value("max_obstacles", cfg.max_obstacles);
  cfg.num_steps = j.value("num_steps", cfg.num_steps);
  cfg.fluid_spacing = j.value("fluid_spacing", cfg.fluid_spacing);
  cfg.obstacle_spacing = j.value("obstacle_spacing", cfg.obstacle_spacing);
  if (j.contains("oracle")) {
    const json& o = j["oracle"];
    cfg.oracle.gravity = o.value("gravity", cfg.oracle.gravity);
    cfg.oracle.interaction_radius = o.value("interaction_radius", cfg.oracle.interaction_radius);
    cfg.oracle.repulsion_stiffness =
        o.value("repulsion_stiffness", cfg.oracle.repulsion_stiffness);
    cfg.oracle.damping = o.value("damping", cfg.oracle.damping);
    cfg.oracle.collision_radius = o.value("collision_radius", cfg.oracle.collision_radius);
    cfg.oracle.dt = o.value("dt", cfg.oracle.dt);
    cfg.oracle.floor.removes = o.value("floor_removes", cfg.oracle.floor.removes);
    cfg.oracle.floor.height = o.value("floor_height", cfg.oracle.floor.height);
  }
  return cfg;
}

}  // namespace invdes
