#include "invdes/optimizers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "invdes/rng.hpp"

namespace invdes {

int cem_elite_count(const CEMConfig& cfg) {
  return std::max(1, static_cast<int>(std::floor(cfg.elite_fraction * cfg.population)));
}

double l2_norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void adam_step(std::vector<double>& phi, std::vector<double> grad, AdamState& state,
               const GDConfig& cfg, double lr_override) {
  const size_t n = phi.size();
  if (grad.size() != n) throw ShapeError("adam_step: gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (cfg.grad_clip > 0) {
    const double norm = l2_norm(grad);
    if (norm > cfg.grad_clip) {
      const double scale = cfg.grad_clip / norm;
      for (double& g : grad) g *= scale;
    }
  }
  state.t += 1;
  const double lr = lr_override > 0 ? lr_override : cfg.lr;
  const double bc1 = 1.0 - std::pow(cfg.b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.b2, static_cast<double>(state.t));
  for (size_t i = 0; i < n; ++i) {
    state.m[i] = cfg.b1 * state.m[i] + (1.0 - cfg.b1) * grad[i];
    state.v[i] = cfg.b2 * state.v[i] + (1.0 - cfg.b2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    phi[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

void write_record_csv(const std::string& path, const OptRunRecord& record) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "iteration,j_model,j_oracle,grad_norm_or_sigma,evals,wallclock_ms\n";
  for (const IterationRecord& it : record.iterations) {
    os << it.iteration << ',' << fmt_double(it.j_model) << ','
       << (it.has_oracle ? fmt_double(it.j_oracle) : std::string()) << ','
       << fmt_double(it.aux_norm) << ',' << it.evals << ',' << fmt_double(it.wallclock_ms)
       << '\n';
  }
}

OptRunRecord gd_optimize(std::vector<double> initial_phi, const ValueGradFn& objective,
                         const GDConfig& cfg, const GDOptions& options) {
  OptRunRecord record;
  std::vector<double> phi = std::move(initial_phi);
  AdamState adam;
  for (int iter = 0; iter < cfg.steps; ++iter) {
    const double t0 = options.record_wallclock ? now_ms() : 0;
    ValueGrad vg;
    try {
      vg = objective(phi);
    } catch (const NumericError& e) {
      record.aborted = true;
      record.abort_reason = e.what();
      break;
    }
    bool finite = std::isfinite(vg.value);
    for (double g : vg.grad) finite = finite && std::isfinite(g);
    if (!finite) {
      record.aborted = true;
      record.abort_reason = "non-finite objective or gradient at iteration " +
                            std::to_string(iter);
      break;
    }

    IterationRecord it;
    it.iteration = iter;
    it.j_model = vg.value;
    it.aux_norm = l2_norm(vg.grad);
    it.evals = 1;
    it.phi = phi;
    if (options.oracle_eval && cfg.eval_every > 0 && iter % cfg.eval_every == 0) {
      it.j_oracle = options.oracle_eval(phi);
      it.has_oracle = true;
    }

    // ascent: Adam minimizes, so feed the negated gradient
    std::vector<double> neg(vg.grad.size());
    for (size_t i = 0; i < neg.size(); ++i) neg[i] = -vg.grad[i];
    adam_step(phi, std::move(neg), adam, cfg);

    if (options.record_wallclock) it.wallclock_ms = now_ms() - t0;
    record.total_evals += 1;
    record.iterations.push_back(std::move(it));
  }
  record.final_phi = phi;
  return record;
}

CemUpdate cem_step(const std::vector<double>& mu, const std::vector<double>& sigma,
                   const std::vector<double>& values,
                   const std::vector<std::vector<double>>& samples, const CEMConfig& cfg) {
  if (values.size() != samples.size())
    throw ShapeError("cem_step: values/samples size mismatch");
  const int pop = static_cast<int>(values.size());
  const int elite_n = std::min(cem_elite_count(cfg), pop);
  const size_t dim = mu.size();

  std::vector<int> order(pop);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[a] > values[b]; });

  CemUpdate upd;
  upd.elites.assign(order.begin(), order.begin() + elite_n);
  std::vector<double> elite_mu(dim, 0.0), elite_sigma(dim, 0.0);
  for (int e : upd.elites)
    for (size_t d = 0; d < dim; ++d) elite_mu[d] += samples[e][d];
  for (size_t d = 0; d < dim; ++d) elite_mu[d] /= elite_n;
  for (int e : upd.elites)
    for (size_t d = 0; d < dim; ++d) {
      const double diff = samples[e][d] - elite_mu[d];
      elite_sigma[d] += diff * diff;
    }
  for (size_t d = 0; d < dim; ++d) elite_sigma[d] = std::sqrt(elite_sigma[d] / elite_n);

  const double beta = cfg.smoothing;
  upd.mu.resize(dim);
  upd.sigma.resize(dim);
  for (size_t d = 0; d < dim; ++d) {
    upd.mu[d] = (1.0 - beta) * elite_mu[d] + beta * mu[d];
    upd.sigma[d] = std::max((1.0 - beta) * elite_sigma[d] + beta * sigma[d], 1e-6);
  }
  return upd;
}

std::vector<double> cem_sample_candidate(const std::vector<double>& mu,
                                         const std::vector<double>& sigma, std::uint64_t seed,
                                         int iteration, int candidate) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(iteration),
                   static_cast<std::uint64_t>(candidate)));
  std::vector<double> phi(mu.size());
  for (size_t d = 0; d < mu.size(); ++d) phi[d] = mu[d] + sigma[d] * rng.normal();
  return phi;
}

OptRunRecord cem_optimize(int dim, const ValueFn& objective, const CEMConfig& cfg,
                          std::uint64_t seed, const CemOptions& options) {
  if (cfg.population < 1) throw ConfigError("CEM population must be at least 1");
  std::vector<double> mu = cfg.initial_mu.empty() ? std::vector<double>(dim, 0.0)
                                                  : cfg.initial_mu;
  if (static_cast<int>(mu.size()) != dim) throw ConfigError("CEM initial mu has wrong arity");
  std::vector<double> sigma(dim, cfg.initial_sigma);

  PopulationEvalFn evaluate = options.evaluator;
  if (!evaluate)
    evaluate = [&](const std::vector<std::vector<double>>& candidates) {
      std::vector<double> values(candidates.size());
      for (size_t i = 0; i < candidates.size(); ++i) values[i] = objective(candidates[i]);
      return values;
    };

  OptRunRecord record;
  for (int iter = 0; iter < cfg.steps; ++iter) {
    const double t0 = options.record_wallclock ? now_ms() : 0;
    std::vector<std::vector<double>> samples(cfg.population);
    for (int j = 0; j < cfg.population; ++j)
      samples[j] = cem_sample_candidate(mu, sigma, seed, iter, j);

    std::vector<double> values;
    try {
      values = evaluate(samples);
    } catch (const NumericError& e) {
      record.aborted = true;
      record.abort_reason = e.what();
      break;
    }
    const CemUpdate upd = cem_step(mu, sigma, values, samples, cfg);
    mu = upd.mu;
    sigma = upd.sigma;

    IterationRecord it;
    it.iteration = iter;
    it.j_model = values[upd.elites.front()];  // best elite this iteration
    it.aux_norm = l2_norm(sigma);
    it.evals = cfg.population;
    it.phi = mu;
    if (options.oracle_eval && cfg.eval_every > 0 && iter % cfg.eval_every == 0) {
      it.j_oracle = options.oracle_eval(mu);
      it.has_oracle = true;
    }
    if (options.record_wallclock) it.wallclock_ms = now_ms() - t0;
    record.total_evals += cfg.population;
    record.iterations.push_back(std::move(it));
  }
  record.final_phi = mu;
  return record;
}

}  // namespace invdes
