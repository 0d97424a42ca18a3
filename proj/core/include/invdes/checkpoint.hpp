#pragma once

#include <functional>
#include <vector>

#include "invdes/tensor.hpp"

namespace invdes {

/// Segment boundaries 0 = s0 < s1 < ... < sm = K for a K-step rollout.
/// Activations are stored only at boundaries; segments are re-executed on
/// their own tape while the reverse pass walks the rollout backwards.
struct CheckpointSchedule {
  std::vector<int> boundaries;

  static CheckpointSchedule per_step(int num_steps);
  static CheckpointSchedule single_segment(int num_steps);
  /// Boundaries every `segment_len` steps (last segment may be shorter).
  static CheckpointSchedule uniform(int num_steps, int segment_len);

  void validate(int num_steps) const;
  int num_segments() const { return std::max<int>(1, static_cast<int>(boundaries.size()) - 1); }
};

/// Pure state transition over the differentiable slots of a rollout state.
/// `params` are shared leaves (model weights, design parameters); the same
/// function is used for the value-only storing pass and the recorded
/// recompute passes, so it must be deterministic.
using RolloutStepFn = std::function<std::vector<Tensor>(
    const std::vector<Tensor>& params, const std::vector<Tensor>& state)>;

/// Scalar objective of the final state.
using RolloutLossFn =
    std::function<Tensor(const std::vector<Tensor>& params, const std::vector<Tensor>& state)>;

struct RolloutBackwardResult {
  double loss = 0;
  std::vector<Tensor> state_grads;  // d loss / d initial state slots
  std::vector<Tensor> param_grads;  // d loss / d params
  long forward_evals = 0;           // total step-fn invocations (both passes)
  int peak_tape_nodes = 0;          // largest per-segment tape
};

/// Loss and gradients of loss(step^K(initial)) with segment-wise
/// recomputation. Matches a single-tape backward pass bit for bit: segment
/// sweeps are seeded with the cotangents and running parameter accumulators
/// of the later segments, so every floating-point addition happens in the
/// same order as in the monolithic sweep.
RolloutBackwardResult checkpointed_rollout_backward(
    const RolloutStepFn& step, const RolloutLossFn& loss,
    const std::vector<Tensor>& initial_state, const std::vector<Tensor>& params,
    int num_steps, const CheckpointSchedule& schedule);

}  // namespace invdes
