#include "invdes/objective.hpp"

#include <cmath>

#include "invdes/rewards.hpp"

namespace invdes {

namespace {

// Rebuild a ParticleState from rollout tensor slots. The removed mask is a
// pure function of positions: frozen particles sit at their crossing
// position at or below the floor.
ParticleState state_from_slots(const Tensor& positions, const Tensor& history,
                               const std::vector<int>& types, const FloorSpec& floor) {
  const int n = static_cast<int>(types.size());
  std::vector<char> removed(n, 0);
  if (floor.removes)
    for (int i = 0; i < n; ++i)
      removed[i] = types[i] == kFluidNode && positions.at(i, 1) <= floor.height;
  return ParticleState(positions, history, types, std::move(removed));
}

ParticleState initial_state_for(const TaskSpec& task, const Tensor& phi) {
  return assemble_initial_state(realize_design(task, phi), task.scene);
}

}  // namespace

double objective_model_value(const TaskSpec& task, const ModelParams& params,
                             const std::vector<double>& phi) {
  const Tensor phi_t({design_arity(task)}, phi);
  const ParticleState initial = initial_state_for(task, phi_t);
  const std::vector<ParticleState> rollout =
      rollout_model(initial, params, task.rollout_steps, task.dt, task.scene.floor);
  const std::optional<Tensor> field = field_parameters(task, phi_t);
  return evaluate_reward(task.reward, rollout.back(), field ? &*field : nullptr).total.value();
}

ValueGrad objective_model(const TaskSpec& task, const ModelParams& params,
                          const std::vector<double>& phi) {
  const Tensor phi_t({design_arity(task)}, phi);
  const ParticleState initial = initial_state_for(task, phi_t);
  const std::vector<int> types = initial.node_types;

  const RolloutStepFn step = [&](const std::vector<Tensor>&,
                                 const std::vector<Tensor>& slots) -> std::vector<Tensor> {
    const ParticleState s = state_from_slots(slots[0], slots[1], types, task.scene.floor);
    const ParticleState next = model_step(s, params, task.dt, task.scene.floor);
    return {next.positions, next.velocity_history};
  };
  const RolloutLossFn loss = [&](const std::vector<Tensor>&,
                                 const std::vector<Tensor>& slots) -> Tensor {
    const ParticleState s = state_from_slots(slots[0], slots[1], types, task.scene.floor);
    return evaluate_reward(task.reward, s, nullptr).total;
  };

  const RolloutBackwardResult rollout = checkpointed_rollout_backward(
      step, loss, {initial.positions.detached(), initial.velocity_history.detached()}, {},
      task.rollout_steps, CheckpointSchedule::per_step(task.rollout_steps));

  // Design pass: pull the positional cotangent (and the regularizer) back
  // to phi through the design function.
  Tape tape;
  const Tensor phi_leaf = tape.leaf(phi_t);
  const ParticleState attached = initial_state_for(task, phi_leaf);

  std::vector<BackwardSeed> seeds;
  seeds.push_back({attached.positions.node(), rollout.state_grads[0].data()});
  double reg_value = 0;
  if (const std::optional<Tensor> field = field_parameters(task, phi_leaf)) {
    const Tensor reg = heightfield_smoothness(*field, task.reward.gamma_r);
    reg_value = reg.value();
    seeds.push_back({reg.node(), {-1.0}});
  }
  auto grads = tape.backward_seeded(seeds);

  ValueGrad out;
  out.value = rollout.loss - reg_value;
  out.grad = grads.at(phi_leaf.node()).data();
  return out;
}

double objective_model_value(const TaskSpec& task, const Ensemble& ensemble,
                             const std::vector<double>& phi) {
  double total = 0;
  for (const ModelParams& member : ensemble.members)
    total += objective_model_value(task, member, phi);
  return total / ensemble.size();
}

ValueGrad objective_model(const TaskSpec& task, const Ensemble& ensemble,
                          const std::vector<double>& phi) {
  return ensemble_value_and_grad(
      [&](const ModelParams& member) { return objective_model(task, member, phi); }, ensemble);
}

double objective_oracle(const TaskSpec& task, const std::vector<double>& phi,
                        const OracleConfig& base) {
  const Tensor phi_t({design_arity(task)}, phi);
  const ToolGeometry geom = realize_design(task, phi_t.detached());
  OracleConfig cfg = base;
  cfg.dt = task.dt;
  cfg.floor = task.scene.floor;
  cfg.obstacles = geom.segments;
  const ParticleState initial = assemble_initial_state(geom, task.scene);
  const std::vector<ParticleState> rollout = rollout_oracle(initial, cfg, task.rollout_steps);
  const std::optional<Tensor> field = field_parameters(task, phi_t);
  return evaluate_reward(task.reward, rollout.back(), field ? &*field : nullptr).total.value();
}

namespace {

RewardReport make_report(const RewardTerms& terms, double initial_raw) {
  RewardReport report;
  report.raw = terms.total.value();
  report.normalized = normalized_reward(report.raw, initial_raw);
  report.main = terms.main;
  report.spread = terms.spread;
  report.regularizer = terms.regularizer;
  report.warning = terms.no_particles_warning;
  return report;
}

}  // namespace

RewardReport report_model(const TaskSpec& task, const ModelParams& params,
                          const std::vector<double>& phi, double initial_raw) {
  const Tensor phi_t({design_arity(task)}, phi);
  const ParticleState initial = initial_state_for(task, phi_t);
  const std::vector<ParticleState> rollout =
      rollout_model(initial, params, task.rollout_steps, task.dt, task.scene.floor);
  const std::optional<Tensor> field = field_parameters(task, phi_t);
  return make_report(evaluate_reward(task.reward, rollout.back(), field ? &*field : nullptr),
                     initial_raw);
}

RewardReport report_oracle(const TaskSpec& task, const std::vector<double>& phi,
                           double initial_raw, const OracleConfig& base) {
  const Tensor phi_t({design_arity(task)}, phi);
  const ToolGeometry geom = realize_design(task, phi_t.detached());
  OracleConfig cfg = base;
  cfg.dt = task.dt;
  cfg.floor = task.scene.floor;
  cfg.obstacles = geom.segments;
  const ParticleState initial = assemble_initial_state(geom, task.scene);
  const std::vector<ParticleState> rollout = rollout_oracle(initial, cfg, task.rollout_steps);
  const std::optional<Tensor> field = field_parameters(task, phi_t);
  return make_report(evaluate_reward(task.reward, rollout.back(), field ? &*field : nullptr),
                     initial_raw);
}

}  // namespace invdes
