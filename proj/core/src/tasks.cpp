#include "invdes/tasks.hpp"

#include <cmath>

#include <json.hpp>

#include "invdes/rng.hpp"

namespace invdes {

using nlohmann::json;

namespace {

struct MazeTemplate {
  Box domain;
  double table_length;
};

MazeTemplate maze_template(int n) {
  switch (n) {
    case 3: return {{0.14, 0.3, 0.65, 0.6}, 0.72};
    case 4: return {{0.14, 0.3, 0.71, 0.6}, 0.64};
    case 5: return {{0.14, 0.3, 0.75, 0.6}, 0.65};
    case 6: return {{0.14, 0.25, 0.77, 0.65}, 0.63};
    default:
      throw ConfigError("maze grid size must be 3..6, got " + std::to_string(n));
  }
}

std::array<double, 2> sample_in_box(const Box& box, Rng& rng) {
  return {rng.uniform(box.x_min, box.x_max), rng.uniform(box.y_min, box.y_max)};
}

}  // namespace

TaskSpec generate_task(const std::string& name, std::uint64_t seed,
                       const TaskOverrides& overrides) {
  TaskSpec task;
  task.name = name;
  task.seed = seed;
  task.rollout_steps = overrides.rollout_steps > 0 ? overrides.rollout_steps : 50;
  if (task.rollout_steps > 300) throw ConfigError("rollout length capped at 300");
  task.scene.jitter_seed = mix_seed(seed, 0x6a17);
  Rng reward_rng(mix_seed(seed, 0x5eed));

  if (name == "contain" || name == "ramp") {
    task.kind = DesignKind::RelativeJoints;
    task.joint_spec.anchor = {0.15, 0.35};
    task.joint_spec.tool_length = 0.8;
    task.joint_spec.joints = overrides.joints > 0 ? overrides.joints : 16;
    task.joint_spec.with_offset = overrides.with_offset;
    task.scene.fluid_box = {0.2, 0.5, 0.3, 0.6};
    task.reward.kind = RewardKind::GaussianGoal;
    task.reward.sigma = 0.1;
    task.reward.sampling_box =
        name == "contain" ? Box{0.4, 0.1, 0.6, 0.3} : Box{0.8, 0.0, 1.0, 0.2};
    task.reward.mu = sample_in_box(task.reward.sampling_box, reward_rng);
    task.default_gd_lr = 0.005;
    task.default_cem_sigma = 0.5;
    return task;
  }

  if (name.rfind("maze", 0) == 0) {
    int n = overrides.grid_n > 0 ? overrides.grid_n : 6;
    if (name.size() > 5 && name[4] == '-') n = std::stoi(name.substr(5));
    const MazeTemplate tmpl = maze_template(n);
    task.kind = DesignKind::RotorGrid;
    task.rotor_spec.n = n;
    task.rotor_spec.domain = tmpl.domain;
    task.rotor_spec.rotor_length = tmpl.table_length / n;
    task.scene.fluid_box = {0.2, 0.75, 0.8, 0.8};
    task.reward.kind = RewardKind::GaussianGoal;
    task.reward.sigma = 0.1;
    task.reward.sampling_box = {0.1, 0.1, 0.9, 0.2};
    task.reward.mu = sample_in_box(task.reward.sampling_box, reward_rng);
    task.default_gd_lr = 0.01;
    task.default_cem_sigma = 1.5;
    return task;
  }

  if (name == "landscape-direction" || name == "landscape-pools") {
    task.kind = overrides.control_points > 0 ? DesignKind::HeightfieldControlPoints
                                             : DesignKind::Heightfield;
    task.field_spec.resolution =
        overrides.field_resolution > 0 ? overrides.field_resolution : 25;
    task.field_spec.control_points = overrides.control_points;
    task.scene.fluid_box = {0.46, 0.68, 0.54, 0.95};  // inflow column
    task.default_gd_lr = 0.01;
    task.default_cem_sigma = 0.1;
    task.reward.gamma_r = 300.0;
    if (name == "landscape-direction") {
      task.reward.kind = RewardKind::Direction;
      task.reward.center = {0.5, 0.5};
      // one of 8 directions spaced over [0, 180) degrees
      const double angle = reward_rng.uniform_int(8) * (M_PI / 8.0);
      task.reward.direction = {std::cos(angle), std::sin(angle)};
    } else {
      task.reward.kind = RewardKind::Pools;
      task.reward.pool_sigma = 0.4;
      const int pools = overrides.num_pools > 0 ? overrides.num_pools : 2;
      if (pools == 2) {
        task.reward.pools = {{0.075, 0.0}, {0.925, 0.0}};
      } else if (pools == 3) {
        task.reward.pools = {{0.025, 0.0}, {0.5, 0.0}, {0.975, 0.0}};
      } else {
        throw ConfigError("landscape-pools supports 2 or 3 pools");
      }
    }
    return task;
  }

  throw ConfigError("unknown task '" + name + "'");
}

int design_arity(const TaskSpec& task) {
  switch (task.kind) {
    case DesignKind::RelativeJoints:
    case DesignKind::AbsoluteJoints:
      return task.joint_spec.joints + (task.joint_spec.with_offset ? 2 : 0);
    case DesignKind::RotorGrid:
      return task.rotor_spec.n * task.rotor_spec.n;
    case DesignKind::Heightfield:
      return task.field_spec.resolution;
    case DesignKind::HeightfieldControlPoints:
      return task.field_spec.control_points;
  }
  return 0;
}

ToolGeometry realize_design(const TaskSpec& task, const Tensor& phi) {
  switch (task.kind) {
    case DesignKind::RelativeJoints:
      return tool_from_relative_angles(phi, task.joint_spec);
    case DesignKind::AbsoluteJoints:
      return tool_from_absolute_angles(phi, task.joint_spec);
    case DesignKind::RotorGrid:
      return rotor_grid(phi, task.rotor_spec);
    case DesignKind::Heightfield:
    case DesignKind::HeightfieldControlPoints:
      return heightfield_tool(phi, task.field_spec);
  }
  throw ConfigError("unreachable design kind");
}

std::optional<Tensor> field_parameters(const TaskSpec& task, const Tensor& phi) {
  if (task.kind == DesignKind::Heightfield) return phi;
  if (task.kind == DesignKind::HeightfieldControlPoints)
    return interpolate_control_points(phi, task.field_spec.resolution);
  return std::nullopt;
}

namespace {

json box_to_json(const Box& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

Box box_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>()};
}

json task_json(const TaskSpec& t) {
  json j;
  j["name"] = t.name;
  j["kind"] = design_kind_name(t.kind);
  j["rollout_steps"] = t.rollout_steps;
  j["dt"] = t.dt;
  j["seed"] = t.seed;
  j["default_gd_lr"] = t.default_gd_lr;
  j["default_cem_sigma"] = t.default_cem_sigma;
  j["joint_spec"] = {{"anchor", t.joint_spec.anchor},
                     {"tool_length", t.joint_spec.tool_length},
                     {"joints", t.joint_spec.joints},
                     {"spacing", t.joint_spec.spacing},
                     {"with_offset", t.joint_spec.with_offset}};
  j["rotor_spec"] = {{"n", t.rotor_spec.n},
                     {"domain", box_to_json(t.rotor_spec.domain)},
                     {"rotor_length", t.rotor_spec.rotor_length},
                     {"spacing", t.rotor_spec.spacing}};
  j["field_spec"] = {{"resolution", t.field_spec.resolution},
                     {"x_min", t.field_spec.x_min},
                     {"x_max", t.field_spec.x_max},
                     {"base_y", t.field_spec.base_y},
                     {"gamma_h", t.field_spec.gamma_h},
                     {"spacing", t.field_spec.spacing},
                     {"control_points", t.field_spec.control_points}};
  j["scene"] = {{"fluid_box", box_to_json(t.scene.fluid_box)},
                {"fluid_spacing", t.scene.fluid_spacing},
                {"jitter_seed", t.scene.jitter_seed},
                {"floor_removes", t.scene.floor.removes},
                {"floor_height", t.scene.floor.height}};
  j["reward"] = {{"kind", reward_kind_name(t.reward.kind)},
                 {"mu", t.reward.mu},
                 {"sigma", t.reward.sigma},
                 {"direction", t.reward.direction},
                 {"center", t.reward.center},
                 {"pools", t.reward.pools},
                 {"pool_sigma", t.reward.pool_sigma},
                 {"gamma_r", t.reward.gamma_r},
                 {"sampling_box", box_to_json(t.reward.sampling_box)}};
  return j;
}

TaskSpec task_from(const json& j) {
  TaskSpec t;
  t.name = j.at("name").get<std::string>();
  t.kind = design_kind_from_name(j.at("kind").get<std::string>());
  t.rollout_steps = j.at("rollout_steps").get<int>();
  t.dt = j.at("dt").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.default_gd_lr = j.at("default_gd_lr").get<double>();
  t.default_cem_sigma = j.at("default_cem_sigma").get<double>();
  const json& js = j.at("joint_spec");
  t.joint_spec.anchor = js.at("anchor").get<std::array<double, 2>>();
  t.joint_spec.tool_length = js.at("tool_length").get<double>();
  t.joint_spec.joints = js.at("joints").get<int>();
  t.joint_spec.spacing = js.at("spacing").get<double>();
  t.joint_spec.with_offset = js.at("with_offset").get<bool>();
  const json& rs = j.at("rotor_spec");
  t.rotor_spec.n = rs.at("n").get<int>();
  t.rotor_spec.domain = box_from_json(rs.at("domain"));
  t.rotor_spec.rotor_length = rs.at("rotor_length").get<double>();
  t.rotor_spec.spacing = rs.at("spacing").get<double>();
  const json& fs = j.at("field_spec");
  t.field_spec.resolution = fs.at("resolution").get<int>();
  t.field_spec.x_min = fs.at("x_min").get<double>();
  t.field_spec.x_max = fs.at("x_max").get<double>();
  t.field_spec.base_y = fs.at("base_y").get<double>();
  t.field_spec.gamma_h = fs.at("gamma_h").get<double>();
  t.field_spec.spacing = fs.at("spacing").get<double>();
  t.field_spec.control_points = fs.at("control_points").get<int>();
  const json& sc = j.at("scene");
  t.scene.fluid_box = box_from_json(sc.at("fluid_box"));
  t.scene.fluid_spacing = sc.at("fluid_spacing").get<double>();
  t.scene.jitter_seed = sc.at("jitter_seed").get<std::uint64_t>();
  t.scene.floor.removes = sc.at("floor_removes").get<bool>();
  t.scene.floor.height = sc.at("floor_height").get<double>();
  const json& rw = j.at("reward");
  t.reward.kind = reward_kind_from_name(rw.at("kind").get<std::string>());
  t.reward.mu = rw.at("mu").get<std::array<double, 2>>();
  t.reward.sigma = rw.at("sigma").get<double>();
  t.reward.direction = rw.at("direction").get<std::array<double, 2>>();
  t.reward.center = rw.at("center").get<std::array<double, 2>>();
  t.reward.pools = rw.at("pools").get<std::vector<std::array<double, 2>>>();
  t.reward.pool_sigma = rw.at("pool_sigma").get<double>();
  t.reward.gamma_r = rw.at("gamma_r").get<double>();
  t.reward.sampling_box = box_from_json(rw.at("sampling_box"));
  return t;
}

}  // namespace

std::string task_to_json(const TaskSpec& task) { return task_json(task).dump(2); }

TaskSpec task_from_json(const std::string& json_text) {
  return task_from(json::parse(json_text));
}

std::string design_to_json(const TaskSpec& task, const std::vector<double>& phi) {
  json j;
  j["kind"] = design_kind_name(task.kind);
  j["phi"] = phi;
  j["alpha"] = task_json(task);
  return j.dump(2);
}

std::pair<TaskSpec, std::vector<double>> design_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  TaskSpec task = task_from(j.at("alpha"));
  const auto phi = j.at("phi").get<std::vector<double>>();
  if (design_kind_from_name(j.at("kind").get<std::string>()) != task.kind)
    throw ConfigError("design file kind does not match its alpha block");
  if (static_cast<int>(phi.size()) != design_arity(task))
    throw ConfigError("design file phi arity mismatch");
  return {task, phi};
}

}  // namespace invdes
