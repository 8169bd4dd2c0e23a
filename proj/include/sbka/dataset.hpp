#pragma once

// Labeled two-modality samples and the synthetic zero-shot dataset generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sbka/encoder.hpp"
#include "sbka/numerics.hpp"

namespace sbka {

enum class Modality : std::uint8_t { sketch = 0, photo = 1 };

struct LabeledSample {
  Vector x;
  std::uint32_t label = 0;
  Modality modality = Modality::photo;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

using Batch = std::vector<LabeledSample>;

struct Dataset {
  std::vector<LabeledSample> samples;
  std::vector<std::uint32_t> seen_classes;
  std::vector<std::uint32_t> unseen_classes;

  bool is_seen(std::uint32_t label) const {
    return std::find(seen_classes.begin(), seen_classes.end(), label) != seen_classes.end();
  }

  std::vector<LabeledSample> select(bool seen) const {
    std::vector<LabeledSample> out;
    for (const auto& s : samples) {
      if (is_seen(s.label) == seen) out.push_back(s);
    }
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SyntheticSpec {
  std::size_t n_classes = 20;
  std::size_t n_seen = 15;
  std::size_t per_class_per_modality = 20;
  std::size_t d_in = 16;
  double modality_gap = 0.5;
  double intra_class_spread = 0.5;
  Seed seed{1};
};

/// Class centers c ~ N(0, I) in d_in dimensions. Photos are A_P c + noise and sketches are
/// (A_P + gap * dA) c + noise, with A_P and dA having N(0, 1/d_in) entries and noise
/// N(0, spread^2 I). Classes [0, n_seen) are seen, the rest unseen. Samples are ordered by
/// class, then modality (sketch first), then index.
inline Dataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.n_seen < 2 || spec.n_seen >= spec.n_classes) {
    throw ConfigError("need 2 <= n_seen < n_classes (got n_seen=" + std::to_string(spec.n_seen) +
                      ", n_classes=" + std::to_string(spec.n_classes) + ")");
  }
  if (spec.per_class_per_modality < 2) throw ConfigError("per_class_per_modality must be at least 2");
  if (spec.d_in == 0) throw ConfigError("d_in must be at least 1");
  if (spec.intra_class_spread < 0.0 || spec.modality_gap < 0.0) {
    throw ConfigError("modality_gap and intra_class_spread must be non-negative");
  }

  const std::size_t d = spec.d_in;
  CounterRng rng(spec.seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix a_photo(d, d);
  Matrix a_delta(d, d);
  for (double& v : a_photo.data) v = scale * rng.normal();
  for (double& v : a_delta.data) v = scale * rng.normal();
  Matrix a_sketch(d, d);
  for (std::size_t i = 0; i < a_sketch.data.size(); ++i) {
    a_sketch.data[i] = a_photo.data[i] + spec.modality_gap * a_delta.data[i];
  }

  Dataset ds;
  for (std::uint32_t c = 0; c < spec.n_classes; ++c) {
    (c < spec.n_seen ? ds.seen_classes : ds.unseen_classes).push_back(c);
  }
  ds.samples.reserve(spec.n_classes * 2 * spec.per_class_per_modality);
  for (std::uint32_t c = 0; c < spec.n_classes; ++c) {
    Vector center(d);
    for (double& v : center) v = rng.normal();
    for (Modality mod : {Modality::sketch, Modality::photo}) {
      const Matrix& a = mod == Modality::sketch ? a_sketch : a_photo;
      for (std::size_t n = 0; n < spec.per_class_per_modality; ++n) {
        LabeledSample s;
        s.label = c;
        s.modality = mod;
        s.x.assign(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < d; ++j) acc += a(i, j) * center[j];
          s.x[i] = acc + spec.intra_class_spread * rng.normal();
        }
        ds.samples.push_back(std::move(s));
      }
    }
  }
  return ds;
}

/// Per-training-class prior vectors over the source-label space (k_train rows, k_src columns).
struct SemanticPrior {
  Matrix table;

  static SemanticPrior zeros(std::size_t k_train, std::size_t k_src) { return {Matrix(k_train, k_src)}; }

  std::span<const double> row(std::uint32_t label) const {
    if (label >= table.rows) throw LabelError("no prior row for class " + std::to_string(label));
    return {table.data.data() + label * table.cols, table.cols};
  }

  friend bool operator==(const SemanticPrior&, const SemanticPrior&) = default;
};

/// Source-label index of a training class.
inline std::uint32_t source_label(std::uint32_t label, std::size_t k_src) {
  return static_cast<std::uint32_t>(label % k_src);
}

/// Synthetic stand-in for a semantic-similarity table: class c is fully similar to its own
/// source label.
inline SemanticPrior one_hot_prior(std::size_t k_train, std::size_t k_src) {
  SemanticPrior p = SemanticPrior::zeros(k_train, k_src);
  for (std::uint32_t c = 0; c < k_train; ++c) p.table(c, source_label(c, k_src)) = 1.0;
  return p;
}

}  // namespace sbka
