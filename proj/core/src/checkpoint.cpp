#include "invdes/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace invdes {

CheckpointSchedule CheckpointSchedule::per_step(int num_steps) {
  CheckpointSchedule s;
  s.boundaries.resize(num_steps + 1);
  for (int i = 0; i <= num_steps; ++i) s.boundaries[i] = i;
  if (num_steps == 0) s.boundaries = {0};
  return s;
}

CheckpointSchedule CheckpointSchedule::single_segment(int num_steps) {
  if (num_steps == 0) return {{0}};
  return {{0, num_steps}};
}

CheckpointSchedule CheckpointSchedule::uniform(int num_steps, int segment_len) {
  if (segment_len <= 0) throw ConfigError("checkpoint segment length must be positive");
  CheckpointSchedule s;
  for (int b = 0; b < num_steps; b += segment_len) s.boundaries.push_back(b);
  s.boundaries.push_back(num_steps);
  return s;
}

void CheckpointSchedule::validate(int num_steps) const {
  if (boundaries.empty() || boundaries.front() != 0)
    throw ConfigError("checkpoint schedule must start at 0");
  if (boundaries.back() != num_steps)
    throw ConfigError("checkpoint schedule must end at the rollout length");
  for (size_t i = 1; i < boundaries.size(); ++i)
    if (boundaries[i] <= boundaries[i - 1])
      throw ConfigError("checkpoint boundaries must be strictly increasing");
}

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

RolloutBackwardResult checkpointed_rollout_backward(
    const RolloutStepFn& step, const RolloutLossFn& loss,
    const std::vector<Tensor>& initial_state, const std::vector<Tensor>& params,
    int num_steps, const CheckpointSchedule& schedule) {
  schedule.validate(num_steps);
  RolloutBackwardResult result;

  std::vector<Tensor> params_plain;
  params_plain.reserve(params.size());
  for (const Tensor& p : params) params_plain.push_back(p.detached());
  std::vector<Tensor> state_plain;
  state_plain.reserve(initial_state.size());
  for (const Tensor& s : initial_state) state_plain.push_back(s.detached());

  // Storing pass: values only, boundary states kept.
  std::vector<std::vector<Tensor>> stored;
  stored.reserve(schedule.boundaries.size());
  stored.push_back(state_plain);
  {
    std::vector<Tensor> state = state_plain;
    size_t next_boundary = 1;
    for (int t = 0; t < num_steps; ++t) {
      state = step(params_plain, state);
      ++result.forward_evals;
      if (next_boundary < schedule.boundaries.size() &&
          t + 1 == schedule.boundaries[next_boundary]) {
        stored.push_back(state);
        ++next_boundary;
      }
    }
  }

  struct Segment {
    int lo, hi;
  };
  std::vector<Segment> segments;
  if (num_steps == 0) {
    segments.push_back({0, 0});
  } else {
    for (size_t i = 0; i + 1 < schedule.boundaries.size(); ++i)
      segments.push_back({schedule.boundaries[i], schedule.boundaries[i + 1]});
  }

  const size_t num_slots = initial_state.size();
  std::vector<std::vector<double>> cotangent(num_slots);
  std::vector<std::vector<double>> param_accum(params.size());
  bool have_param_accum = false;

  for (int seg = static_cast<int>(segments.size()) - 1; seg >= 0; --seg) {
    Tape tape;
    std::vector<Tensor> params_attached;
    params_attached.reserve(params.size());
    for (const Tensor& p : params_plain) params_attached.push_back(tape.leaf(p));
    std::vector<Tensor> state_leaves;
    state_leaves.reserve(num_slots);
    for (const Tensor& s : stored[seg]) state_leaves.push_back(tape.leaf(s));

    std::vector<Tensor> state = state_leaves;
    for (int t = segments[seg].lo; t < segments[seg].hi; ++t) {
      state = step(params_attached, state);
      ++result.forward_evals;
    }
    if (segments[seg].hi > segments[seg].lo) {
      const std::vector<Tensor>& reference = stored[seg + 1];
      for (size_t i = 0; i < num_slots; ++i)
        if (!bitwise_equal(state[i].detached(), reference[i]))
          throw NumericError("checkpointed rollout: recompute mismatch at step " +
                             std::to_string(segments[seg].hi) +
                             " (step function is not pure)");
    }

    std::vector<BackwardSeed> seeds;
    const bool last_segment = seg == static_cast<int>(segments.size()) - 1;
    if (last_segment) {
      Tensor root = loss(params_attached, state);
      if (!root.is_scalar()) throw ShapeError("rollout loss must be scalar");
      if (!std::isfinite(root.value()))
        throw NumericError("rollout loss is non-finite");
      result.loss = root.value();
      seeds.push_back({root.node(), {1.0}});
    } else {
      for (size_t i = 0; i < num_slots; ++i)
        seeds.push_back({state[i].node(), cotangent[i]});
    }

    std::vector<BackwardSeed> carry;
    if (have_param_accum)
      for (size_t i = 0; i < params.size(); ++i)
        carry.push_back({params_attached[i].node(), param_accum[i]});

    auto grads = tape.backward_seeded(seeds, carry);
    for (size_t i = 0; i < num_slots; ++i)
      cotangent[i] = grads.at(state_leaves[i].node()).data();
    for (size_t i = 0; i < params.size(); ++i)
      param_accum[i] = grads.at(params_attached[i].node()).data();
    have_param_accum = true;
    result.peak_tape_nodes = std::max(result.peak_tape_nodes, tape.num_nodes());
  }

  result.state_grads.reserve(num_slots);
  for (size_t i = 0; i < num_slots; ++i)
    result.state_grads.emplace_back(initial_state[i].shape(), std::move(cotangent[i]));
  result.param_grads.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    if (have_param_accum)
      result.param_grads.emplace_back(params[i].shape(), std::move(param_accum[i]));
    else
      result.param_grads.push_back(Tensor::zeros(params[i].shape()));
  }
  return result;
}

}  // namespace invdes
