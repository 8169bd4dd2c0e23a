#pragma once

// Diagonal-covariance Gaussian mixtures fitted by EM with seeded k-means++ initialization.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sbka/numerics.hpp"

namespace sbka {

struct EmConfig {
  std::size_t max_iters = 200;
  double rel_tol = 1e-6;
  double var_floor = 1e-6;
  Seed seed{21};
  std::size_t init_rounds = 1;

  void validate() const {
    if (max_iters < 1) throw ConfigError("em max_iters must be at least 1");
    if (!(rel_tol > 0.0)) throw ConfigError("em rel_tol must be positive");
    if (!(var_floor > 0.0)) throw ConfigError("em var_floor must be positive");
    if (init_rounds < 1) throw ConfigError("em init_rounds must be at least 1");
  }
};

struct GmmModel {
  Vector weights;
  std::vector<Vector> means;
  std::vector<Vector> variances;  // diagonal covariances

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.empty() ? 0 : means[0].size(); }

  friend bool operator==(const GmmModel&, const GmmModel&) = default;
};

struct GmmFit {
  GmmModel model;
  /// Log-likelihood before the first M-step and after every M-step.
  std::vector<double> log_likelihood;
  bool converged = false;
};

namespace detail {

inline double log_normal_diag(std::span<const double> x, std::span<const double> mean, std::span<const double> var) {
  constexpr double log_2pi = 1.8378770664093454836;
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = x[d] - mean[d];
    s += log_2pi + std::log(var[d]) + diff * diff / var[d];
  }
  return -0.5 * s;
}

inline double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Unnormalized log responsibilities log w_k + log N(x | mu_k, C_k).
inline Vector log_joint(const GmmModel& m, std::span<const double> x) {
  Vector out(m.components());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = m.weights[k] > 0.0 ? std::log(m.weights[k]) + log_normal_diag(x, m.means[k], m.variances[k])
                                : -std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace detail

/// Posterior component probabilities for one point, computed in log space.
inline Distribution responsibilities(const GmmModel& m, std::span<const double> x) {
  detail::require_same_dim(x.size(), m.dim(), "gmm point");
  Vector lj = detail::log_joint(m, x);
  const double lse = detail::log_sum_exp(lj);
  for (double& v : lj) v = std::exp(v - lse);
  return lj;
}

/// Component with maximal responsibility; ties resolve to the lowest index.
inline std::uint32_t assign_component(const GmmModel& m, std::span<const double> x) {
  const Vector lj = detail::log_joint(m, x);
  std::uint32_t best = 0;
  for (std::uint32_t k = 1; k < lj.size(); ++k) {
    if (lj[k] > lj[best]) best = k;
  }
  return best;
}

inline double log_likelihood(const GmmModel& m, std::span<const Vector> data) {
  double ll = 0.0;
  for (const auto& x : data) ll += detail::log_sum_exp(detail::log_joint(m, x));
  return ll;
}

/// k-means++ seeding: one uniform pick, then picks proportional to squared distance from the
/// nearest chosen center. Returns row indices into `data`.
inline std::vector<std::size_t> kmeanspp_seed(std::span<const Vector> data, std::size_t k, CounterRng& rng) {
  std::vector<std::size_t> chosen;
  chosen.push_back(rng.index(data.size()));
  Vector d2(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) d2[i] = squared_distance(data[i], data[chosen[0]]);
  while (chosen.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      pick = data.size() - 1;
      for (std::size_t i = 0; i < data.size(); ++i) {
        acc += d2[i];
        if (acc > u) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(data.size());
    }
    chosen.push_back(pick);
    for (std::size_t i = 0; i < data.size(); ++i) d2[i] = std::min(d2[i], squared_distance(data[i], data[pick]));
  }
  return chosen;
}

inline GmmFit fit_gmm(std::span<const Vector> data, std::size_t k, const EmConfig& cfg) {
  cfg.validate();
  if (k == 0) throw ConfigError("gmm needs at least one component");
  if (data.size() < k) {
    throw DataError("gmm with " + std::to_string(k) + " components needs at least as many points (got " +
                    std::to_string(data.size()) + ")");
  }
  const std::size_t dim = data[0].size();
  if (dim == 0) throw DimensionError("gmm features are empty");
  bool all_same = true;
  for (const auto& x : data) {
    detail::require_same_dim(x.size(), dim, "gmm feature");
    require_finite(x, "gmm features");
    all_same = all_same && x == data[0];
  }
  if (k > 1 && all_same) throw DataError("degenerate data: all features identical with more than one component");

  const auto n = static_cast<double>(data.size());
  Vector mean(dim, 0.0), var(dim, 0.0);
  for (const auto& x : data) {
    for (std::size_t d = 0; d < dim; ++d) mean[d] += x[d];
  }
  for (double& v : mean) v /= n;
  for (const auto& x : data) {
    for (std::size_t d = 0; d < dim; ++d) var[d] += (x[d] - mean[d]) * (x[d] - mean[d]);
  }
  for (double& v : var) v = std::max(v / n, cfg.var_floor);

  CounterRng rng(cfg.seed);
  std::vector<std::size_t> seeds;
  double best_potential = std::numeric_limits<double>::infinity();
  for (std::size_t round = 0; round < cfg.init_rounds; ++round) {
    auto cand = kmeanspp_seed(data, k, rng);
    double potential = 0.0;
    for (const auto& x : data) {
      double m = std::numeric_limits<double>::infinity();
      for (std::size_t c : cand) m = std::min(m, squared_distance(x, data[c]));
      potential += m;
    }
    if (potential < best_potential) {
      best_potential = potential;
      seeds = std::move(cand);
    }
  }

  GmmFit fit;
  GmmModel& m = fit.model;
  m.weights.assign(k, 1.0 / static_cast<double>(k));
  for (std::size_t c : seeds) {
    m.means.push_back(data[c]);
    m.variances.push_back(var);
  }

  std::vector<Vector> resp(data.size());
  auto e_step = [&]() {
    double ll = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      Vector lj = detail::log_joint(m, data[i]);
      const double lse = detail::log_sum_exp(lj);
      ll += lse;
      for (double& v : lj) v = std::exp(v - lse);
      resp[i] = std::move(lj);
    }
    if (!std::isfinite(ll)) throw NumericError("gmm log-likelihood is not finite");
    return ll;
  };

  fit.log_likelihood.push_back(e_step());
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0;
      for (const auto& r : resp) nk += r[c];
      if (!(nk > 0.0)) {
        m.weights[c] = 0.0;
        continue;
      }
      m.weights[c] = nk / n;
      Vector mu(dim, 0.0);
      for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t d = 0; d < dim; ++d) mu[d] += resp[i][c] * data[i][d];
      }
      for (double& v : mu) v /= nk;
      Vector vr(dim, 0.0);
      for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = data[i][d] - mu[d];
          vr[d] += resp[i][c] * diff * diff;
        }
      }
      for (double& v : vr) v = std::max(v / nk, cfg.var_floor);
      m.means[c] = std::move(mu);
      m.variances[c] = std::move(vr);
    }
    const double prev = fit.log_likelihood.back();
    const double ll = e_step();
    fit.log_likelihood.push_back(ll);
    if (ll - prev < cfg.rel_tol * std::abs(prev)) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

}  // namespace sbka
