#pragma once

#include <optional>
#include <string>

#include "invdes/design.hpp"
#include "invdes/rewards.hpp"

namespace invdes {

/// Optional deviations from a task template (ablation sweeps).
struct TaskOverrides {
  int joints = 0;            // contain / ramp
  int grid_n = 0;            // maze
  int rollout_steps = 0;     // all tasks
  int field_resolution = 0;  // landscape tasks
  int control_points = 0;    // landscape tasks: interpolated design space
  int num_pools = 0;         // landscape-pools: 2 or 3
  bool with_offset = false;  // joint tools: add a global [x, y] offset
};

/// A procedurally generated task: design space, fixed initial conditions,
/// reward parameters, and per-task optimizer defaults.
struct TaskSpec {
  std::string name;
  DesignKind kind = DesignKind::RelativeJoints;
  JointedToolSpec joint_spec;
  RotorGridSpec rotor_spec;
  HeightfieldSpec field_spec;
  SceneTemplate scene;
  RewardSpec reward;
  int rollout_steps = 50;
  double dt = 0.05;
  std::uint64_t seed = 0;
  double default_gd_lr = 0.005;
  double default_cem_sigma = 0.5;
};

/// Known names: contain, ramp, maze-3..maze-6, landscape-direction,
/// landscape-pools. The reward mean / direction is sampled from the task's
/// sampling box using the seed.
TaskSpec generate_task(const std::string& name, std::uint64_t seed,
                       const TaskOverrides& overrides = {});

int design_arity(const TaskSpec& task);
ToolGeometry realize_design(const TaskSpec& task, const Tensor& phi);
/// Field parameters the smoothness regularizer applies to (heightfield
/// kinds); empty for joint and rotor kinds.
std::optional<Tensor> field_parameters(const TaskSpec& task, const Tensor& phi);

std::string task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const std::string& json_text);

/// Design file: {"kind": ..., "phi": [...], "alpha": {task}}.
std::string design_to_json(const TaskSpec& task, const std::vector<double>& phi);
std::pair<TaskSpec, std::vector<double>> design_from_json(const std::string& json_text);

}  // namespace invdes
