#include "invdes/rewards.hpp"

#include <cmath>
#include <limits>

namespace invdes {

std::string reward_kind_name(RewardKind kind) {
  switch (kind) {
    case RewardKind::GaussianGoal: return "gaussian-goal";
    case RewardKind::Direction: return "direction";
    case RewardKind::Pools: return "pools";
  }
  return "?";
}

RewardKind reward_kind_from_name(const std::string& name) {
  if (name == "gaussian-goal") return RewardKind::GaussianGoal;
  if (name == "direction") return RewardKind::Direction;
  if (name == "pools") return RewardKind::Pools;
  throw ConfigError("unknown reward kind '" + name + "'");
}

namespace {

// Mean isotropic 2-D normal density of `points` against per-row centers.
Tensor mean_density(const Tensor& points, const Tensor& centers, double sigma) {
  const Tensor diff = sub(points, centers);
  const Tensor sq_dist = matmul(square(diff), Tensor::full({2, 1}, 1.0));
  const Tensor dens = scalar_mul(exp(scalar_mul(sq_dist, -0.5 / (sigma * sigma))),
                                 1.0 / (2.0 * M_PI * sigma * sigma));
  return mean(dens);
}

Tensor tile_center(const std::array<double, 2>& c, int rows) {
  std::vector<double> d(static_cast<size_t>(rows) * 2);
  for (int i = 0; i < rows; ++i) {
    d[2 * i] = c[0];
    d[2 * i + 1] = c[1];
  }
  return Tensor({rows, 2}, std::move(d));
}

}  // namespace

Tensor heightfield_smoothness(const Tensor& phi_map, double gamma_r) {
  const int m = phi_map.shape()[0];
  if (m < 2) return Tensor::scalar(0.0);
  const Tensor diffs = sub(slice_rows(phi_map, 1, m), slice_rows(phi_map, 0, m - 1));
  return scalar_mul(mean(square(diffs)), gamma_r);
}

RewardTerms evaluate_reward(const RewardSpec& spec, const ParticleState& final_state,
                            const Tensor* phi_map) {
  RewardTerms terms;
  Tensor main_term = Tensor::scalar(0.0);
  Tensor spread_term = Tensor::scalar(0.0);

  switch (spec.kind) {
    case RewardKind::GaussianGoal: {
      const std::vector<int> sel = final_state.active_fluid_indices();
      if (sel.empty()) {
        terms.no_particles_warning = true;
        break;
      }
      const Tensor pts = gather(final_state.positions, sel);
      main_term = mean_density(pts, tile_center(spec.mu, static_cast<int>(sel.size())),
                               spec.sigma);
      break;
    }
    case RewardKind::Direction: {
      const std::vector<int> sel = final_state.active_fluid_indices();
      if (sel.empty()) {
        terms.no_particles_warning = true;
        break;
      }
      const double norm = std::hypot(spec.direction[0], spec.direction[1]);
      if (std::abs(norm - 1.0) > 1e-9)
        throw ConfigError("direction reward: d must be a unit vector");
      const Tensor pts = gather(final_state.positions, sel);
      const Tensor centered =
          sub(pts, tile_center(spec.center, static_cast<int>(sel.size())));
      const Tensor d_col({2, 1}, {spec.direction[0], spec.direction[1]});
      // d rotated by +90 degrees
      const Tensor dperp_col({2, 1}, {-spec.direction[1], spec.direction[0]});
      main_term = mean(matmul(centered, d_col));
      if (sel.size() >= 2) spread_term = stddev(matmul(centered, dperp_col));
      break;
    }
    case RewardKind::Pools: {
      if (spec.pools.empty()) throw ConfigError("pools reward: no pool centers");
      const std::vector<int> sel = final_state.removed_fluid_indices();
      if (sel.empty()) {
        terms.no_particles_warning = true;
        break;
      }
      // hard nearest-pool assignment; ties go to the lowest pool index and
      // the gradient flows through the density only
      std::vector<double> assigned(sel.size() * 2);
      for (size_t i = 0; i < sel.size(); ++i) {
        const double x = final_state.positions.at(sel[i], 0);
        const double y = final_state.positions.at(sel[i], 1);
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (size_t p = 0; p < spec.pools.size(); ++p) {
          const double dx = x - spec.pools[p][0], dy = y - spec.pools[p][1];
          const double d2 = dx * dx + dy * dy;
          if (d2 < best_d) {
            best_d = d2;
            best = static_cast<int>(p);
          }
        }
        assigned[2 * i] = spec.pools[best][0];
        assigned[2 * i + 1] = spec.pools[best][1];
      }
      const Tensor pts = gather(final_state.positions, sel);
      main_term = mean_density(
          pts, Tensor({static_cast<int>(sel.size()), 2}, std::move(assigned)), spec.pool_sigma);
      break;
    }
  }

  Tensor total = sub(main_term, spread_term);
  if (phi_map) {
    const Tensor reg = heightfield_smoothness(*phi_map, spec.gamma_r);
    terms.regularizer = reg.value();
    total = sub(total, reg);
  }
  terms.main = main_term.value();
  terms.spread = spread_term.value();
  terms.total = total;
  return terms;
}

}  // namespace invdes
