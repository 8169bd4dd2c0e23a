#pragma once

// End-to-end synthetic benchmark: generate data, pretrain the teacher, train, embed the unseen
// split, match sketches against photos, and score. Also the ablation and sensitivity sweeps built
// on top of it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sbka/codebook.hpp"
#include "sbka/dataset.hpp"
#include "sbka/encoder.hpp"
#include "sbka/metrics.hpp"
#include "sbka/parallel.hpp"
#include "sbka/trainer.hpp"

namespace sbka {

struct BenchmarkConfig {
  SyntheticSpec data;
  std::size_t hidden = 64;
  std::size_t d_emb = 32;
  std::size_t k_src = 0;  // 0: one source label per seen class
  Seed init_seed{31};
  TrainConfig train;
  EmConfig em;
  std::size_t subspaces = 4;
  std::size_t clusters = 0;  // 0: number of gallery classes
  std::size_t metric_k = 100;
  bool one_hot_prior = true;

  ModelDims dims() const {
    return {data.d_in, hidden, d_emb, data.n_seen, k_src == 0 ? data.n_seen : k_src};
  }
};

/// Settings of the desk-scale synthetic benchmark used by the ablation and sweeps.
inline BenchmarkConfig default_benchmark() {
  BenchmarkConfig cfg;
  cfg.data.modality_gap = 1.5;
  cfg.data.intra_class_spread = 0.5;
  cfg.train.lr_student_initial = 1e-2;
  cfg.train.lr_student_final = 1e-5;
  cfg.train.lr_teacher_initial = 1e-2;
  cfg.train.lr_teacher_final = 1e-5;
  return cfg;
}

inline std::vector<Vector> embed(const ModelParams& params, std::span<const LabeledSample> samples) {
  std::vector<Vector> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) { out[i] = forward(params, samples[i].x).emb; });
  return out;
}

struct RetrievalSet {
  std::vector<Vector> queries;
  std::vector<std::uint32_t> query_labels;
  std::vector<Vector> gallery;
  std::vector<std::uint32_t> gallery_labels;
};

/// Sketches of `samples` become queries, photos the gallery.
inline RetrievalSet make_retrieval_set(const ModelParams& params, std::span<const LabeledSample> samples) {
  std::vector<LabeledSample> q, g;
  for (const auto& s : samples) (s.modality == Modality::sketch ? q : g).push_back(s);
  RetrievalSet set;
  set.queries = embed(params, q);
  set.gallery = embed(params, g);
  for (const auto& s : q) set.query_labels.push_back(s.label);
  for (const auto& s : g) set.gallery_labels.push_back(s.label);
  return set;
}

inline std::size_t distinct_count(std::vector<std::uint32_t> labels) {
  std::sort(labels.begin(), labels.end());
  return static_cast<std::size_t>(std::unique(labels.begin(), labels.end()) - labels.begin());
}

struct RetrievalOutput {
  MetricsReport report;
  std::vector<RankedResult> rankings;
};

inline RetrievalOutput run_retrieval(const RetrievalSet& set, const SubspaceCodebook* codebook, std::size_t metric_k) {
  std::vector<RankedResult> results(set.queries.size());
  parallel_for(set.queries.size(), [&](std::size_t i) {
    results[i].query_label = set.query_labels[i];
    results[i].ranking = codebook != nullptr ? retrieve(set.queries[i], set.gallery, *codebook)
                                             : retrieve_one_to_one(set.queries[i], set.gallery);
  });
  RetrievalOutput out;
  out.report = evaluate(results, set.gallery_labels, metric_k);
  out.rankings = std::move(results);
  return out;
}

struct TrainedPair {
  ModelParams student;
  ModelParams teacher;
  TrainHistory history;
  Dataset data;
};

/// Fresh student plus pretrained teacher; seeds derive from `cfg.init_seed`.
inline std::pair<ModelParams, ModelParams> initial_models(const BenchmarkConfig& cfg, const Dataset& data) {
  const ModelDims dims = cfg.dims();
  const ModelParams teacher0 = init_params(dims, derive_seed(cfg.init_seed, "teacher"));
  return {init_params(dims, derive_seed(cfg.init_seed, "student")),
          pretrain_teacher(teacher0, data, cfg.train, derive_seed(cfg.init_seed, "pretrain"))};
}

inline TrainResult train_models(const BenchmarkConfig& cfg, const Dataset& data, const SemanticPrior& prior) {
  auto [student, teacher] = initial_models(cfg, data);
  return train_sbka(std::move(student), std::move(teacher), data, prior, cfg.train);
}

inline TrainedPair train_benchmark(const BenchmarkConfig& cfg) {
  TrainedPair out;
  out.data = generate_synthetic_dataset(cfg.data);
  const ModelDims dims = cfg.dims();
  const SemanticPrior prior = cfg.one_hot_prior ? one_hot_prior(dims.k_train, dims.k_src)
                                                : SemanticPrior::zeros(dims.k_train, dims.k_src);
  TrainResult r = train_models(cfg, out.data, prior);
  out.student = std::move(r.student);
  out.teacher = std::move(r.teacher);
  out.history = std::move(r.history);
  return out;
}

/// Scores a trained student on the unseen split under both matching rules.
struct MatchScores {
  MetricsReport one_to_one;
  MetricsReport one_to_many;
};

inline MatchScores score_unseen(const BenchmarkConfig& cfg, const TrainedPair& trained) {
  const auto unseen = trained.data.select(false);
  const RetrievalSet set = make_retrieval_set(trained.student, unseen);
  const std::size_t k = cfg.clusters == 0 ? distinct_count(set.gallery_labels) : cfg.clusters;
  const SubspaceCodebook cb = fit_subspace_codebook(set.gallery, cfg.subspaces, k, cfg.em);
  return {run_retrieval(set, nullptr, cfg.metric_k).report, run_retrieval(set, &cb, cfg.metric_k).report};
}

inline void set_all_seeds(BenchmarkConfig& cfg, Seed master) {
  cfg.data.seed = derive_seed(master, "data");
  cfg.init_seed = derive_seed(master, "init");
  cfg.train.shuffle_seed = derive_seed(master, "shuffle");
  cfg.train.reference_seed = derive_seed(master, "reference");
  cfg.em.seed = derive_seed(master, "em");
}

/// Copy of `cfg` whose seeds all derive from repetition index `rep`.
inline BenchmarkConfig with_repetition(BenchmarkConfig cfg, std::size_t rep) {
  set_all_seeds(cfg, Seed{0x5B4A0000ULL + rep});
  return cfg;
}

struct AblationRow {
  std::string name;
  bool bidirectional = false;
  bool one_to_many = false;
  std::vector<double> map_all;
  std::vector<double> prec_at_k;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

/// Sample mean and (population) standard deviation.
inline Summary summarize(std::span<const double> v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.std += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(v.size()));
  return s;
}

struct AblationTable {
  std::size_t metric_k = 0;
  std::vector<AblationRow> rows;
};

/// Rows: frozen teacher with one-to-one matching; bidirectional alignment with one-to-one
/// matching; bidirectional alignment with one-to-many matching.
inline AblationTable run_ablation(const BenchmarkConfig& cfg, std::size_t repetitions) {
  if (repetitions < 1) throw ConfigError("ablation needs at least one repetition");
  AblationTable table;
  table.metric_k = cfg.metric_k;
  table.rows = {{"baseline", false, false, {}, {}},
                {"bidirectional", true, false, {}, {}},
                {"bidirectional+one_to_many", true, true, {}, {}}};
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    BenchmarkConfig frozen = with_repetition(cfg, rep);
    BenchmarkConfig bidir = frozen;
    frozen.train.warmup_epochs = frozen.train.total_epochs;
    const MatchScores base = score_unseen(frozen, train_benchmark(frozen));
    const MatchScores both = score_unseen(bidir, train_benchmark(bidir));
    const MetricsReport* picks[] = {&base.one_to_one, &both.one_to_one, &both.one_to_many};
    for (std::size_t r = 0; r < 3; ++r) {
      table.rows[r].map_all.push_back(picks[r]->map_all);
      table.rows[r].prec_at_k.push_back(picks[r]->prec_at_k);
    }
  }
  return table;
}

struct SweepPoint {
  double value = 0.0;
  std::vector<MetricsReport> runs;  // one-to-many scores, one per repetition
};

struct SweepResult {
  std::string parameter;
  std::vector<SweepPoint> points;
};

/// Retrains per setting of lambda_ma; every repetition scores the one-to-many rule.
inline SweepResult run_lambda_sweep(const BenchmarkConfig& cfg, std::span<const double> values, std::size_t repetitions) {
  SweepResult out{"train.lambda_ma", {}};
  for (double v : values) {
    SweepPoint pt{v, {}};
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
      BenchmarkConfig c = with_repetition(cfg, rep);
      c.train.lambda_ma = v;
      pt.runs.push_back(score_unseen(c, train_benchmark(c)).one_to_many);
    }
    out.points.push_back(std::move(pt));
  }
  return out;
}

/// Cluster count only affects matching, so each repetition trains once and refits the codebook
/// per setting.
inline SweepResult run_cluster_sweep(const BenchmarkConfig& cfg, std::span<const std::size_t> counts, std::size_t repetitions) {
  SweepResult out{"match.clusters", {}};
  for (std::size_t k : counts) out.points.push_back({static_cast<double>(k), {}});
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    BenchmarkConfig c = with_repetition(cfg, rep);
    const TrainedPair trained = train_benchmark(c);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      c.clusters = counts[i];
      out.points[i].runs.push_back(score_unseen(c, trained).one_to_many);
    }
  }
  return out;
}

}  // namespace sbka
