#pragma once

#include "invdes/checkpoint.hpp"
#include "invdes/model.hpp"
#include "invdes/oracle.hpp"
#include "invdes/tasks.hpp"

namespace invdes {

/// J_M(phi): reward of the model rollout of the realized design, including
/// the heightfield regularizer. Value only (no tape) — used by CEM-M.
double objective_model_value(const TaskSpec& task, const ModelParams& params,
                             const std::vector<double>& phi);

/// J_M and its gradient with respect to phi, backpropagated through the
/// reward, the checkpointed K-step rollout, and the design function.
ValueGrad objective_model(const TaskSpec& task, const ModelParams& params,
                          const std::vector<double>& phi);

/// Ensemble variants: mean value / mean gradient over members.
double objective_model_value(const TaskSpec& task, const Ensemble& ensemble,
                             const std::vector<double>& phi);
ValueGrad objective_model(const TaskSpec& task, const Ensemble& ensemble,
                          const std::vector<double>& phi);

/// J_S(phi): reward of the (non-differentiable) oracle rollout of the
/// realized design. `base` carries solver constants; obstacles are replaced
/// by the design's segments.
double objective_oracle(const TaskSpec& task, const std::vector<double>& phi,
                        const OracleConfig& base = {});

/// Detailed reward breakdown of one simulator's final state for a design.
RewardReport report_model(const TaskSpec& task, const ModelParams& params,
                          const std::vector<double>& phi, double initial_raw);
RewardReport report_oracle(const TaskSpec& task, const std::vector<double>& phi,
                           double initial_raw, const OracleConfig& base = {});

}  // namespace invdes
