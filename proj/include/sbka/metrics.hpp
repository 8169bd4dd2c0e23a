#pragma once

// Retrieval metrics: average precision (full or cut at K), precision at K, and their means over
// a query set.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sbka/errors.hpp"

namespace sbka {

/// AP = (1 / min(R, K_eff)) * sum over relevant ranks k <= K_eff of precision@k, K_eff = K or the
/// full ranking length.
inline double average_precision(const std::vector<bool>& relevant, std::size_t total_relevant,
                                std::optional<std::size_t> cutoff = std::nullopt) {
  if (total_relevant == 0) throw DataError("average precision is undefined with no relevant items");
  const std::size_t k_eff = cutoff ? std::min(*cutoff, relevant.size()) : relevant.size();
  const std::size_t norm = cutoff ? std::min(total_relevant, *cutoff) : total_relevant;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < k_eff; ++k) {
    if (relevant[k]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(norm);
}

inline double precision_at(const std::vector<bool>& relevant, std::size_t k) {
  if (k == 0) throw ConfigError("precision cutoff must be at least 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, relevant.size()); ++i) hits += relevant[i];
  return static_cast<double>(hits) / static_cast<double>(k);
}

struct RankedResult {
  std::uint32_t query_label = 0;
  std::vector<std::uint32_t> ranking;  // permutation of gallery indices
};

struct MetricsReport {
  double map_all = 0.0;
  double map_at_k = 0.0;
  double prec_at_k = 0.0;
  std::size_t k = 0;
  std::size_t evaluated_queries = 0;
  std::size_t skipped_queries = 0;
  std::vector<double> per_query_ap;  // AP over the full ranking, evaluated queries only

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Relevance is label equality. Queries without any relevant gallery item are skipped and counted.
inline MetricsReport evaluate(std::span<const RankedResult> results, std::span<const std::uint32_t> gallery_labels,
                              std::size_t k) {
  if (results.empty()) throw DataError("evaluate needs at least one query");
  if (k == 0) throw ConfigError("metric K must be at least 1");
  MetricsReport rep;
  rep.k = k;
  double sum_at_k = 0.0, sum_prec = 0.0;
  std::vector<bool> flags;
  for (const auto& r : results) {
    if (r.ranking.size() != gallery_labels.size()) throw DataError("ranking length differs from gallery size");
    flags.assign(r.ranking.size(), false);
    std::size_t total = 0;
    for (std::size_t i = 0; i < r.ranking.size(); ++i) {
      if (r.ranking[i] >= gallery_labels.size()) throw DataError("ranking refers to an unknown gallery item");
      flags[i] = gallery_labels[r.ranking[i]] == r.query_label;
      total += flags[i];
    }
    if (total == 0) {
      ++rep.skipped_queries;
      continue;
    }
    rep.per_query_ap.push_back(average_precision(flags, total));
    sum_at_k += average_precision(flags, total, k);
    sum_prec += precision_at(flags, k);
    ++rep.evaluated_queries;
  }
  if (rep.evaluated_queries == 0) throw DataError("every query was skipped (no relevant gallery items)");
  const auto n = static_cast<double>(rep.evaluated_queries);
  double sum_all = 0.0;
  for (double ap : rep.per_query_ap) sum_all += ap;
  rep.map_all = sum_all / n;
  rep.map_at_k = sum_at_k / n;
  rep.prec_at_k = sum_prec / n;
  return rep;
}

}  // namespace sbka
