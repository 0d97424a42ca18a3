#pragma once

#include <string>
#include <vector>

#include "invdes/model.hpp"
#include "invdes/trajectory.hpp"

namespace invdes {

struct TrainConfig {
  int steps = 20000;
  std::uint64_t seed = 0;
  int batch_size = 2;
  double lr = 1e-4;
  double lr_drop_fraction = 0.6;  // halve the learning rate after this point
  ModelHyper hyper;
  FloorSpec floor;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> losses;  // one entry per step
};

/// Next-step training: sample (state, next-state) pairs, perturb the input
/// positions with Gaussian noise, regress the noise-correcting normalized
/// acceleration targets over fluid nodes with Adam. Deterministic for a
/// fixed seed.
TrainResult train_model(const std::vector<Trajectory>& dataset, const TrainConfig& cfg);

/// Velocity and acceleration statistics of fluid particles, computed once
/// over the dataset.
NormStats compute_norm_stats(const std::vector<Trajectory>& dataset,
                             const FloorSpec& floor = {});

void write_loss_csv(const std::string& path, const std::vector<double>& losses);

/// Mean squared next-position error of the model over every valid sample.
double one_step_position_mse(const ModelParams& params,
                             const std::vector<Trajectory>& dataset,
                             const FloorSpec& floor = {});
/// Same metric for the inertia-only predictor (zero acceleration).
double baseline_position_mse(const std::vector<Trajectory>& dataset,
                             const FloorSpec& floor = {});

/// Gaussian position noise draws, exposed for the statistics check.
std::vector<double> sample_position_noise(int count, double scale, Rng& rng);

/// Contiguous trajectory blocks for ensemble training; split k of n.
std::vector<Trajectory> dataset_split(const std::vector<Trajectory>& dataset, int split,
                                      int num_splits);

}  // namespace invdes
