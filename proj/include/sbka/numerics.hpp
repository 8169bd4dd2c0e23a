#pragma once

// Scalar and vector primitives shared by every other component.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sbka/errors.hpp"

namespace sbka {

using Vector = std::vector<double>;
/// Probability vector: entries in [0, 1] summing to one.
using Distribution = std::vector<double>;

/// Seed for the library-wide generator. Identical seeds give identical streams.
struct Seed {
  std::uint64_t value = 0;
  friend bool operator==(Seed, Seed) = default;
};

inline constexpr double kKlFloor = 1e-12;

namespace detail {

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

}  // namespace detail

/// SplitMix64 finalizer (Steele, Lea and Flood).
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a over a string; used to derive named sub-seeds.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Sub-seed for component `tag` of a master seed: splitmix64_mix(master ^ fnv1a64(tag)).
constexpr Seed derive_seed(Seed master, std::string_view tag) noexcept {
  return Seed{splitmix64_mix(master.value ^ fnv1a64(tag))};
}

/// Counter-based generator: draw n is splitmix64_mix(seed + n * golden_gamma), n = 1, 2, ...
/// Normal deviates use the Box-Muller transform, consuming two uniforms per pair of outputs.
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit CounterRng(Seed seed) : seed_(seed.value) {}

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return splitmix64_mix(seed_ + counter_ * kGamma);
  }

  /// Uniform in the open interval (0, 1).
  double uniform() noexcept { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) noexcept {
    auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return std::min(i, n - 1);
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <class T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

/// Max-subtracted softmax.
inline Distribution softmax(std::span<const double> v) {
  if (v.empty()) throw DimensionError("softmax of an empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  Distribution p(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    p[i] = std::exp(v[i] - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

/// log(softmax(v)) computed without forming the probabilities.
inline Vector log_softmax(std::span<const double> v) {
  if (v.empty()) throw DimensionError("log_softmax of an empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
  return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  detail::require_same_dim(a.size(), b.size(), "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

/// KL(p || q) = sum p_i ln(p_i / q_i); q is floored at `floor` and 0 ln 0 is taken as 0.
inline double kl_divergence(std::span<const double> p, std::span<const double> q, double floor = kKlFloor) {
  detail::require_same_dim(p.size(), q.size(), "kl_divergence");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s += p[i] * (std::log(p[i]) - std::log(std::max(q[i], floor)));
  }
  return std::max(s, 0.0);
}

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

inline Vector seeded_gaussian_vector(Seed seed, std::size_t dim) {
  if (dim == 0) throw DimensionError("seeded_gaussian_vector with dim 0");
  CounterRng rng(seed);
  Vector v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

/// Central-difference gradient of a scalar function.
template <class F>
Vector finite_diff_grad(F&& f, std::span<const double> x, double h = 1e-5) {
  if (!(h > 0.0)) throw NumericError("finite_diff_grad step must be positive");
  Vector probe(x.begin(), x.end());
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(std::span<const double>(probe));
    probe[i] = orig - h;
    const double fm = f(std::span<const double>(probe));
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("non-finite function value at coordinate " + std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  detail::require_same_dim(a.size(), b.size(), "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

}  // namespace sbka
