#pragma once

// One-to-many cluster matching: per-subspace mixtures over gallery embeddings and the fused
// dissimilarity that adds query-to-centroid distances to the query-to-item distance.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sbka/gmm.hpp"
#include "sbka/numerics.hpp"

namespace sbka {

struct SubspaceCodebook {
  std::size_t subspaces = 0;  // M
  std::size_t clusters = 0;   // K
  std::size_t subdim = 0;
  std::vector<GmmModel> models;  // one per subspace
  /// assignments[item][m] is the component of gallery item `item` in subspace m.
  std::vector<std::vector<std::uint32_t>> assignments;

  std::size_t dim() const { return subspaces * subdim; }
  std::size_t gallery_size() const { return assignments.size(); }

  std::span<const double> centroid(std::size_t item, std::size_t m) const {
    return models[m].means[assignments[item][m]];
  }

  friend bool operator==(const SubspaceCodebook&, const SubspaceCodebook&) = default;
};

/// Contiguous slice m of an embedding split into `subspaces` equal parts.
inline std::span<const double> subvector(std::span<const double> e, std::size_t subspaces, std::size_t m) {
  const std::size_t sub = e.size() / subspaces;
  return e.subspan(m * sub, sub);
}

/// Subspace m is fitted with seed cfg.seed + m, so M = 1 reproduces fit_gmm exactly.
inline SubspaceCodebook fit_subspace_codebook(std::span<const Vector> gallery, std::size_t subspaces,
                                              std::size_t clusters, const EmConfig& cfg) {
  if (gallery.empty()) throw DataError("cannot fit a codebook to an empty gallery");
  if (subspaces == 0) throw ConfigError("subspace count must be at least 1");
  const std::size_t dim = gallery[0].size();
  if (dim % subspaces != 0) {
    throw ConfigError("embedding dimension D_emb=" + std::to_string(dim) + " is not divisible by M=" +
                      std::to_string(subspaces));
  }
  SubspaceCodebook cb;
  cb.subspaces = subspaces;
  cb.clusters = clusters;
  cb.subdim = dim / subspaces;
  cb.assignments.assign(gallery.size(), std::vector<std::uint32_t>(subspaces, 0));
  for (std::size_t m = 0; m < subspaces; ++m) {
    std::vector<Vector> part;
    part.reserve(gallery.size());
    for (const auto& e : gallery) {
      detail::require_same_dim(e.size(), dim, "gallery embedding");
      const auto s = subvector(e, subspaces, m);
      part.emplace_back(s.begin(), s.end());
    }
    EmConfig sub_cfg = cfg;
    sub_cfg.seed = Seed{cfg.seed.value + m};
    cb.models.push_back(fit_gmm(part, clusters, sub_cfg).model);
    for (std::size_t i = 0; i < part.size(); ++i) cb.assignments[i][m] = assign_component(cb.models[m], part[i]);
  }
  return cb;
}

/// ||q - g|| + sum_m ||q_m - c_m(g)||, where c_m(g) is the centroid assigned to gallery item g in
/// subspace m.
inline double fused_dissimilarity(std::span<const double> query, std::span<const double> gallery_emb,
                                  std::size_t gallery_index, const SubspaceCodebook& cb) {
  if (gallery_index >= cb.gallery_size()) {
    throw DataError("gallery index " + std::to_string(gallery_index) + " is not in the codebook");
  }
  detail::require_same_dim(query.size(), cb.dim(), "query vs codebook");
  double d = euclidean_distance(query, gallery_emb);
  for (std::size_t m = 0; m < cb.subspaces; ++m) {
    d += euclidean_distance(subvector(query, cb.subspaces, m), cb.centroid(gallery_index, m));
  }
  return d;
}

/// Gallery indices by ascending score; exact ties keep ascending index order.
inline std::vector<std::uint32_t> rank_by_score(std::span<const double> scores) {
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0U);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });
  return order;
}

enum class MatchMode { one_to_one, one_to_many };

/// Full gallery ranking under the fused dissimilarity.
inline std::vector<std::uint32_t> retrieve(std::span<const double> query, std::span<const Vector> gallery,
                                           const SubspaceCodebook& cb) {
  if (gallery.empty()) throw DataError("retrieve on an empty gallery");
  if (cb.gallery_size() != gallery.size()) throw DataError("codebook was fitted on a different gallery");
  Vector scores(gallery.size());
  for (std::size_t j = 0; j < gallery.size(); ++j) scores[j] = fused_dissimilarity(query, gallery[j], j, cb);
  return rank_by_score(scores);
}

/// Baseline ranking by plain Euclidean distance.
inline std::vector<std::uint32_t> retrieve_one_to_one(std::span<const double> query, std::span<const Vector> gallery) {
  if (gallery.empty()) throw DataError("retrieve on an empty gallery");
  Vector scores(gallery.size());
  for (std::size_t j = 0; j < gallery.size(); ++j) scores[j] = euclidean_distance(query, gallery[j]);
  return rank_by_score(scores);
}

inline std::vector<std::uint32_t> retrieve(std::span<const double> query, std::span<const Vector> gallery,
                                           const SubspaceCodebook& cb, MatchMode mode) {
  return mode == MatchMode::one_to_many ? retrieve(query, gallery, cb) : retrieve_one_to_one(query, gallery);
}

}  // namespace sbka
