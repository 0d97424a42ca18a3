#include "invdes/state.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace invdes {

ParticleState::ParticleState(Tensor positions_, Tensor velocity_history_,
                             std::vector<int> node_types_, std::vector<char> removed_)
    : positions(std::move(positions_)),
      velocity_history(std::move(velocity_history_)),
      node_types(std::move(node_types_)),
      removed(std::move(removed_)) {
  const int n = static_cast<int>(node_types.size());
  if (positions.shape() != Tensor::Shape{n, 2})
    throw ShapeError("ParticleState: positions must be N x 2");
  if (velocity_history.shape() != Tensor::Shape{n, 2 * kHistory})
    throw ShapeError("ParticleState: velocity history must be N x 2H");
  if (removed.empty()) removed.assign(n, 0);
  if (static_cast<int>(removed.size()) != n)
    throw ShapeError("ParticleState: removed mask size mismatch");
}

ParticleState ParticleState::at_rest(Tensor positions, std::vector<int> node_types) {
  const int n = static_cast<int>(node_types.size());
  return ParticleState(std::move(positions), Tensor::zeros({n, 2 * kHistory}),
                       std::move(node_types));
}

int ParticleState::num_fluid() const {
  int c = 0;
  for (int t : node_types) c += t == kFluidNode;
  return c;
}

std::vector<std::array<double, 2>> ParticleState::removed_positions() const {
  std::vector<std::array<double, 2>> out;
  for (int i = 0; i < num_particles(); ++i)
    if (removed[i]) out.push_back({positions.at(i, 0), positions.at(i, 1)});
  return out;
}

std::vector<int> ParticleState::active_fluid_indices() const {
  std::vector<int> out;
  for (int i = 0; i < num_particles(); ++i)
    if (node_types[i] == kFluidNode && !removed[i]) out.push_back(i);
  return out;
}

std::vector<int> ParticleState::removed_fluid_indices() const {
  std::vector<int> out;
  for (int i = 0; i < num_particles(); ++i)
    if (node_types[i] == kFluidNode && removed[i]) out.push_back(i);
  return out;
}

EdgeSet build_radius_edges(const Tensor& positions, double radius) {
  if (radius <= 0) throw ConfigError("connectivity radius must be positive");
  if (!positions.all_finite()) throw NumericError("build_radius_edges: non-finite positions");
  const int n = positions.shape()[0];
  const double* p = positions.data().data();

  const double cell = radius;
  auto cell_key = [&](double x, double y) -> std::int64_t {
    const auto cx = static_cast<std::int64_t>(std::floor(x / cell));
    const auto cy = static_cast<std::int64_t>(std::floor(y / cell));
    return cx * 73856093LL ^ cy * 19349663LL;
  };
  std::unordered_map<std::int64_t, std::vector<int>> grid;
  grid.reserve(static_cast<size_t>(n) * 2);
  for (int i = 0; i < n; ++i) grid[cell_key(p[2 * i], p[2 * i + 1])].push_back(i);

  EdgeSet edges;
  const double r2 = radius * radius;
  std::vector<int> nbrs;
  for (int i = 0; i < n; ++i) {
    nbrs.clear();
    const double xi = p[2 * i], yi = p[2 * i + 1];
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy) {
        auto it = grid.find(cell_key(xi + dx * cell, yi + dy * cell));
        if (it == grid.end()) continue;
        for (int j : it->second) {
          if (j == i) continue;
          const double ddx = p[2 * j] - xi, ddy = p[2 * j + 1] - yi;
          if (ddx * ddx + ddy * ddy <= r2) nbrs.push_back(j);
        }
      }
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    for (int j : nbrs) {
      edges.senders.push_back(j);
      edges.receivers.push_back(i);
    }
  }

  const int e = edges.size();
  std::vector<double> disp(static_cast<size_t>(e) * 2);
  std::vector<double> dist(e);
  for (int k = 0; k < e; ++k) {
    const int s = edges.senders[k], r = edges.receivers[k];
    const double dx = p[2 * r] - p[2 * s];
    const double dy = p[2 * r + 1] - p[2 * s + 1];
    disp[2 * k] = dx;
    disp[2 * k + 1] = dy;
    dist[k] = std::sqrt(dx * dx + dy * dy);
  }
  edges.rel_disp = Tensor({e, 2}, std::move(disp));
  edges.dist = Tensor({e, 1}, std::move(dist));
  return edges;
}

ParticleState advance_state(const ParticleState& state, const Tensor& accel, double dt,
                            const FloorSpec& floor) {
  const int n = state.num_particles();
  if (accel.shape() != Tensor::Shape{n, 2})
    throw ShapeError("advance_state: acceleration must be N x 2");
  if (!accel.all_finite()) throw NumericError("advance_state: non-finite acceleration");

  // Integration masks are data-dependent constants: gradients do not flow
  // through the removal decision, only through the retained positions.
  std::vector<double> mask2(static_cast<size_t>(n) * 2);
  std::vector<double> mask_hist(static_cast<size_t>(n) * 2 * kHistory);
  std::vector<double> inv_hist(static_cast<size_t>(n) * 2 * kHistory);
  for (int i = 0; i < n; ++i) {
    const bool moves = state.node_types[i] == kFluidNode && !state.removed[i];
    const double m = moves ? 1.0 : 0.0;
    mask2[2 * i] = mask2[2 * i + 1] = m;
    for (int j = 0; j < 2 * kHistory; ++j) {
      mask_hist[static_cast<size_t>(i) * 2 * kHistory + j] = m;
      inv_hist[static_cast<size_t>(i) * 2 * kHistory + j] = 1.0 - m;
    }
  }
  const Tensor move2({n, 2}, std::move(mask2));
  const Tensor move_h({n, 2 * kHistory}, std::move(mask_hist));
  const Tensor keep_h({n, 2 * kHistory}, std::move(inv_hist));

  const Tensor v_last = slice_cols(state.velocity_history, 2 * kHistory - 2, 2 * kHistory);
  const Tensor v_new = mul(move2, add(v_last, scalar_mul(accel, dt)));
  const Tensor u_new = add(state.positions, scalar_mul(v_new, dt));
  const Tensor shifted =
      concat_cols({slice_cols(state.velocity_history, 2, 2 * kHistory), v_new});
  const Tensor hist_new =
      add(mul(move_h, shifted), mul(keep_h, state.velocity_history));

  std::vector<char> removed = state.removed;
  for (int i = 0; i < n; ++i) {
    if (state.node_types[i] != kFluidNode || removed[i]) continue;
    const double y = u_new.at(i, 1);
    if (floor.removes && y <= floor.height) {
      removed[i] = 1;  // frozen at the first out-of-domain position
      continue;
    }
    const double x = u_new.at(i, 0);
    if (x < -0.1 || x > 1.1 || y < -0.1 || y > 1.1)
      throw NumericError("advance_state: particle left the scene bounds (rollout divergence)");
  }
  return ParticleState(u_new, hist_new, state.node_types, std::move(removed));
}

namespace {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void serialize_state(std::ostream& os, const ParticleState& state) {
  os.write("IDSTATE1", 8);
  const std::int32_t n = state.num_particles();
  write_pod(os, n);
  write_pod(os, static_cast<std::int32_t>(kHistory));
  os.write(reinterpret_cast<const char*>(state.positions.data().data()),
           sizeof(double) * state.positions.size());
  os.write(reinterpret_cast<const char*>(state.velocity_history.data().data()),
           sizeof(double) * state.velocity_history.size());
  for (int t : state.node_types) write_pod(os, static_cast<std::int32_t>(t));
  os.write(reinterpret_cast<const char*>(state.removed.data()), state.removed.size());
}

ParticleState deserialize_state(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != "IDSTATE1")
    throw ConfigError("deserialize_state: bad magic");
  const int n = read_pod<std::int32_t>(is);
  const int h = read_pod<std::int32_t>(is);
  if (h != kHistory) throw ConfigError("deserialize_state: history length mismatch");
  std::vector<double> pos(static_cast<size_t>(n) * 2);
  is.read(reinterpret_cast<char*>(pos.data()), sizeof(double) * pos.size());
  std::vector<double> hist(static_cast<size_t>(n) * 2 * kHistory);
  is.read(reinterpret_cast<char*>(hist.data()), sizeof(double) * hist.size());
  std::vector<int> types(n);
  for (int i = 0; i < n; ++i) types[i] = read_pod<std::int32_t>(is);
  std::vector<char> removed(n);
  is.read(removed.data(), n);
  if (!is) throw ConfigError("deserialize_state: truncated stream");
  return ParticleState(Tensor({n, 2}, std::move(pos)),
                       Tensor({n, 2 * kHistory}, std::move(hist)), std::move(types),
                       std::move(removed));
}

}  // namespace invdes
