#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "invdes/tensor.hpp"

namespace invdes {

inline constexpr int kFluidNode = 0;
inline constexpr int kDesignNode = 1;
inline constexpr int kNumNodeTypes = 3;
/// Velocity history rows kept per particle (newest last).
inline constexpr int kHistory = 2;

/// Floor handling for a task: particles crossing y <= height are flagged
/// removed and frozen at their first out-of-domain position.
struct FloorSpec {
  bool removes = true;
  double height = 0.0;
};

/// Immutable particle state: positions (N x 2, scene units in the unit box),
/// velocity history (N x 2H, finite-difference velocities, newest last),
/// per-particle type, and the removed mask. Operations return new states.
struct ParticleState {
  Tensor positions;
  Tensor velocity_history;
  std::vector<int> node_types;
  std::vector<char> removed;

  ParticleState() = default;
  ParticleState(Tensor positions, Tensor velocity_history, std::vector<int> node_types,
                std::vector<char> removed = {});

  /// N particles at rest (zero velocity history, nothing removed).
  static ParticleState at_rest(Tensor positions, std::vector<int> node_types);

  int num_particles() const { return static_cast<int>(node_types.size()); }
  int num_fluid() const;
  bool is_removed(int i) const { return removed[i] != 0; }

  /// Positions of particles that have touched the floor (they are frozen at
  /// the crossing position, so their current position is the crossing one).
  std::vector<std::array<double, 2>> removed_positions() const;

  /// Row indices of fluid particles that are still active / already removed.
  std::vector<int> active_fluid_indices() const;
  std::vector<int> removed_fluid_indices() const;
};

/// Symmetric proximity edges: (i, j) present iff i != j and
/// |u_i - u_j| <= radius (inclusive). Feature tensors are detached values;
/// differentiable consumers rebuild features from positions via gather.
struct EdgeSet {
  std::vector<int> senders;
  std::vector<int> receivers;
  Tensor rel_disp;  // E x 2, receiver - sender
  Tensor dist;      // E x 1
  int size() const { return static_cast<int>(senders.size()); }
};

/// Uniform-grid neighbor search; edge order is deterministic
/// (receiver-major, sender ascending).
EdgeSet build_radius_edges(const Tensor& positions, double radius);

/// Semi-implicit Euler update of fluid particles: v' = v + a dt,
/// u' = u + v' dt. Design nodes and removed particles are untouched.
/// Newly crossed particles are flagged removed. Differentiable in positions,
/// history and acceleration.
ParticleState advance_state(const ParticleState& state, const Tensor& accel, double dt,
                            const FloorSpec& floor);

/// Bit-exact binary round trip.
void serialize_state(std::ostream& os, const ParticleState& state);
ParticleState deserialize_state(std::istream& is);

}  // namespace invdes
