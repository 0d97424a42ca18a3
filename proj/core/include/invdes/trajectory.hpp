#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "invdes/state.hpp"
#include "invdes/tensor.hpp"

namespace invdes {

/// A recorded rollout: per-frame particle positions plus static metadata.
/// Storage precision is float32 (IDTRAJ1 container); everything downstream
/// recomputes velocities from these positions.
struct Trajectory {
  double dt = 0.05;
  double radius = 0.03;  // interaction radius used to generate the data
  std::vector<int> node_types;
  std::vector<Tensor> frames;  // each N x 2

  int num_particles() const { return static_cast<int>(node_types.size()); }
  int num_frames() const { return static_cast<int>(frames.size()); }
};

/// IDTRAJ1 container: magic "IDTRAJ1\0", little-endian uint32 JSON header
/// length, UTF-8 JSON header {num_steps, num_particles, dt, radius,
/// node_types}, then num_steps x N x 2 little-endian float32 positions.
void write_trajectory(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory(const std::string& path);

struct DatasetManifest {
  std::uint64_t seed = 0;
  int count = 0;
  std::vector<std::string> files;  // relative to the manifest directory
  std::string config_json;        // generator configuration, serialized

  std::string directory;  // set on read; not serialized
};

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

std::vector<Trajectory> load_manifest_trajectories(const DatasetManifest& manifest);

}  // namespace invdes
