#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "invdes/state.hpp"
#include "invdes/tensor.hpp"

namespace invdes {

/// Two hidden ReLU layers of the configured width plus a linear output.
struct Mlp {
  Tensor w1, b1, w2, b2, w3, b3;
};

Tensor apply_mlp(const Mlp& mlp, const Tensor& x);

struct ProcessorBlock {
  Mlp edge;
  Mlp node;
};

struct ModelHyper {
  int width = 32;
  int blocks = 3;
  double radius = 0.045;      // connectivity radius
  double noise_scale = 3e-4;  // training noise, scene units

  bool operator==(const ModelHyper&) const = default;
};

/// Dataset normalization statistics, per component. Stddevs are clamped to
/// 1e-8 from below wherever they are consumed.
struct NormStats {
  std::array<double, 2> vel_mean{0, 0};
  std::array<double, 2> vel_std{1, 1};
  std::array<double, 2> acc_mean{0, 0};
  std::array<double, 2> acc_std{1, 1};
};

/// All learnable weights of the simulator plus normalization statistics.
/// Immutable during inference; training builds updated copies.
struct ModelParams {
  ModelHyper hyper;
  NormStats stats;
  Mlp node_encoder;
  Mlp edge_encoder;
  std::vector<ProcessorBlock> processors;
  Mlp decoder;

  static constexpr int node_input_width() { return 2 * kHistory + kNumNodeTypes + 4; }
  static constexpr int edge_input_width() { return 3; }

  static ModelParams init(const ModelHyper& hyper, std::uint64_t seed);

  /// Weight tensors in declaration order (the serialization order).
  std::vector<Tensor*> weights();
  std::vector<const Tensor*> weights() const;
  int num_parameters() const;

  /// Copy with every weight registered as a differentiable leaf of `tape`.
  ModelParams attach(Tape& tape) const;
};

struct LatentGraph {
  Tensor nodes;  // N x W
  Tensor edges;  // E x W
  EdgeSet edge_set;
};

/// Node features: normalized velocity history, one-hot node type, wall
/// distances clamped at the connectivity radius. Edge features: relative
/// displacement and distance, scaled by the connectivity radius. Recorded on
/// a tape whenever positions or weights are attached.
LatentGraph encode(const ParticleState& state, const ModelParams& params,
                   const Box& walls = {0, 0, 1, 1});

/// Message-passing blocks with residual edge and node updates.
LatentGraph process(LatentGraph latent, const ModelParams& params);

/// Per-particle acceleration, de-normalized by the target statistics.
Tensor decode(const LatentGraph& latent, const ModelParams& params);

ParticleState model_step(const ParticleState& state, const ModelParams& params, double dt,
                         const FloorSpec& floor, const Box& walls = {0, 0, 1, 1});

std::vector<ParticleState> rollout_model(const ParticleState& initial,
                                         const ModelParams& params, int num_steps, double dt,
                                         const FloorSpec& floor,
                                         const Box& walls = {0, 0, 1, 1});

/// IDWTS1 container: magic "IDWTS1\0", little-endian uint32 JSON header
/// length, JSON hyper/stats header, float64 weight blobs in declaration
/// order. `provenance_json` is embedded verbatim when non-empty.
void save_weights(const std::string& path, const ModelParams& params,
                  const std::string& provenance_json = "");
ModelParams load_weights(const std::string& path);

/// Members trained on disjoint dataset splits; identical hyperparameters.
struct Ensemble {
  std::vector<ModelParams> members;

  explicit Ensemble(std::vector<ModelParams> m);
  int size() const { return static_cast<int>(members.size()); }
};

struct ValueGrad {
  double value = 0;
  std::vector<double> grad;
};

/// Mean of member objective values and gradients, accumulated in member
/// order so results do not depend on evaluation scheduling.
ValueGrad ensemble_value_and_grad(const std::function<ValueGrad(const ModelParams&)>& objective,
                                  const Ensemble& ensemble);

}  // namespace invdes
