#pragma once

#include <array>
#include <string>
#include <vector>

#include "invdes/state.hpp"
#include "invdes/trajectory.hpp"

namespace invdes {

/// 2-D line segment obstacle with a collision radius shared via OracleConfig.
struct Segment {
  std::array<double, 2> a{0, 0};
  std::array<double, 2> b{0, 0};
};

/// Toy particle-fluid solver used as ground truth: pairwise linear repulsion,
/// gravity, per-step velocity damping, inelastic projection off obstacle
/// segments and the non-floor walls of the unit box. Deliberately built from
/// projections and conditionals; never recorded on a tape.
struct OracleConfig {
  std::array<double, 2> gravity{0.0, -1.0};
  double interaction_radius = 0.03;
  double repulsion_stiffness = 40.0;
  double damping = 0.98;  // retention factor applied to the previous velocity
  double collision_radius = 0.01;
  std::vector<Segment> obstacles;
  double dt = 0.05;
  FloorSpec floor;
};

ParticleState step_oracle(const ParticleState& state, const OracleConfig& cfg);

/// K+1 states including the initial one. Throws NumericError with the step
/// index on divergence (any coordinate beyond +-10).
std::vector<ParticleState> rollout_oracle(const ParticleState& initial,
                                          const OracleConfig& cfg, int num_steps);

struct DatasetGenConfig {
  std::uint64_t seed = 0;
  int num_trajectories = 200;
  int min_particles = 50;
  int max_particles = 150;
  int min_obstacles = 1;
  int max_obstacles = 4;
  int num_steps = 50;
  double fluid_spacing = 0.02;
  double obstacle_spacing = 0.015;  // discretization of segments into nodes
  OracleConfig oracle;
};

/// Scene used for training data: a block of fluid falling onto 1..4 random
/// non-crossing straight segments. Byte-identical output for a fixed seed.
ParticleState make_training_scene(const DatasetGenConfig& cfg, std::uint64_t scene_seed,
                                  std::vector<Segment>* obstacles_out);

DatasetManifest generate_dataset(const DatasetGenConfig& cfg, const std::string& out_dir);

std::string dataset_config_json(const DatasetGenConfig& cfg);
DatasetGenConfig dataset_config_from_json(const std::string& config_json);

}  // namespace invdes
