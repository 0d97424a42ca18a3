#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "invdes/model.hpp"

namespace invdes {

struct GDConfig {
  double lr = 0.005;
  double b1 = 0.9;
  double b2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 10.0;  // global-norm threshold; <= 0 disables clipping
  int steps = 1000;
  int eval_every = 10;  // ground-truth reward cadence; 0 disables
};

struct CEMConfig {
  int population = 20;
  double elite_fraction = 0.1;
  std::vector<double> initial_mu;  // empty: zeros
  double initial_sigma = 0.5;
  double smoothing = 0.1;  // weight kept on the previous distribution
  int steps = 1000;
  int eval_every = 10;
};

int cem_elite_count(const CEMConfig& cfg);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
};

double l2_norm(const std::vector<double>& v);

/// Clip the gradient to the global-norm threshold, then take one
/// bias-corrected Adam minimization step. `lr_override` (when > 0) replaces
/// cfg.lr for this step.
void adam_step(std::vector<double>& phi, std::vector<double> grad, AdamState& state,
               const GDConfig& cfg, double lr_override = 0);

struct IterationRecord {
  int iteration = 0;
  double j_model = 0;
  double j_oracle = 0;
  bool has_oracle = false;
  double aux_norm = 0;  // gradient norm for GD, sigma norm for CEM
  long evals = 0;
  double wallclock_ms = 0;
  std::vector<double> phi;
};

struct OptRunRecord {
  std::vector<IterationRecord> iterations;
  std::vector<double> final_phi;
  long total_evals = 0;
  bool aborted = false;
  std::string abort_reason;
};

/// Columns: iteration,j_model,j_oracle,grad_norm_or_sigma,evals,wallclock_ms.
void write_record_csv(const std::string& path, const OptRunRecord& record);

using ValueGradFn = std::function<ValueGrad(const std::vector<double>&)>;
using ValueFn = std::function<double(const std::vector<double>&)>;
/// Evaluates a population; must return values in candidate order.
using PopulationEvalFn =
    std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;

struct GDOptions {
  ValueFn oracle_eval;  // optional J_S recorder
  bool record_wallclock = false;
};

/// Adam ascent on a differentiable objective. Aborts on a non-finite value
/// or gradient, preserving the record collected so far.
OptRunRecord gd_optimize(std::vector<double> initial_phi, const ValueGradFn& objective,
                         const GDConfig& cfg, const GDOptions& options = {});

struct CemUpdate {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<int> elites;  // candidate indices, best first
};

/// Refit the sampling distribution on the elite fraction (descending value,
/// ties to the lower candidate index) and blend with the previous one.
CemUpdate cem_step(const std::vector<double>& mu, const std::vector<double>& sigma,
                   const std::vector<double>& values,
                   const std::vector<std::vector<double>>& samples, const CEMConfig& cfg);

/// Candidate draw from N(mu, diag sigma^2) on a counter-based stream keyed by
/// (seed, iteration, candidate), so results are independent of evaluation
/// order.
std::vector<double> cem_sample_candidate(const std::vector<double>& mu,
                                         const std::vector<double>& sigma, std::uint64_t seed,
                                         int iteration, int candidate);

struct CemOptions {
  ValueFn oracle_eval;
  PopulationEvalFn evaluator;  // optional custom population executor
  bool record_wallclock = false;
};

OptRunRecord cem_optimize(int dim, const ValueFn& objective, const CEMConfig& cfg,
                          std::uint64_t seed, const CemOptions& options = {});

}  // namespace invdes
