#pragma once

#include <array>
#include <string>
#include <vector>

#include "invdes/common.hpp"
#include "invdes/state.hpp"
#include "invdes/tensor.hpp"

namespace invdes {

enum class RewardKind { GaussianGoal, Direction, Pools };

std::string reward_kind_name(RewardKind kind);
RewardKind reward_kind_from_name(const std::string& name);

/// Reward parameters theta_R. Densities are products of per-axis normals, so
/// the 2-D peak value is 1 / (2 pi sigma^2).
struct RewardSpec {
  RewardKind kind = RewardKind::GaussianGoal;
  // gaussian-goal
  std::array<double, 2> mu{0.5, 0.2};
  double sigma = 0.1;
  // direction
  std::array<double, 2> direction{1, 0};
  std::array<double, 2> center{0.5, 0.5};
  // pools
  std::vector<std::array<double, 2>> pools;
  double pool_sigma = 0.4;
  // heightfield smoothness regularizer weight
  double gamma_r = 300.0;
  // task generation only
  Box sampling_box;
};

struct RewardTerms {
  Tensor total;  // scalar; attached whenever the inputs are
  double main = 0;
  double spread = 0;
  double regularizer = 0;
  bool no_particles_warning = false;
};

/// Reward of a final rollout state. gaussian-goal and direction score the
/// non-removed fluid; pools scores removed fluid at its crossing positions.
/// The smoothness regularizer is included only when `phi_map` (the
/// heightfield field parameters) is supplied.
RewardTerms evaluate_reward(const RewardSpec& spec, const ParticleState& final_state,
                            const Tensor* phi_map = nullptr);

/// gamma_r * mean of squared forward differences; exactly zero iff the field
/// parameters are constant.
Tensor heightfield_smoothness(const Tensor& phi_map, double gamma_r);

inline double normalized_reward(double raw, double initial_raw) { return raw - initial_raw; }

struct RewardReport {
  double raw = 0;
  double normalized = 0;
  double main = 0;
  double spread = 0;
  double regularizer = 0;
  bool warning = false;
};

}  // namespace invdes
