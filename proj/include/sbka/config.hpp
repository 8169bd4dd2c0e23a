#pragma once

// Flat key/value run configuration. A config file is a JSON object whose keys must all appear in
// the schema below; values not given keep their defaults.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "sbka/io.hpp"
#include "sbka/pipeline.hpp"

namespace sbka {

struct RunConfig {
  BenchmarkConfig bench = default_benchmark();
  Seed gradcheck_seed{41};
  std::size_t gradcheck_instances = 50;
};

enum class KeyType { count, real, seed };

struct SchemaEntry {
  std::string key;
  KeyType type;
  std::string help;
  std::function<nlohmann::json(const RunConfig&)> get;
  std::function<void(RunConfig&, const nlohmann::json&)> set;
};

namespace detail {

inline SchemaEntry make_count(std::string key, std::string help, std::function<std::size_t&(RunConfig&)> ref) {
  return {std::move(key), KeyType::count, std::move(help),
          [ref](const RunConfig& c) { return nlohmann::json(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const nlohmann::json& v) { ref(c) = v.get<std::size_t>(); }};
}

inline SchemaEntry make_real(std::string key, std::string help, std::function<double&(RunConfig&)> ref) {
  return {std::move(key), KeyType::real, std::move(help),
          [ref](const RunConfig& c) { return nlohmann::json(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const nlohmann::json& v) { ref(c) = v.get<double>(); }};
}

inline SchemaEntry make_seed(std::string key, std::string help, std::function<Seed&(RunConfig&)> ref) {
  return {std::move(key), KeyType::seed, std::move(help),
          [ref](const RunConfig& c) { return nlohmann::json(ref(const_cast<RunConfig&>(c)).value); },
          [ref](RunConfig& c, const nlohmann::json& v) { ref(c).value = v.get<std::uint64_t>(); }};
}

}  // namespace detail

/// Every accepted key, in documentation order.
inline const std::vector<SchemaEntry>& config_schema() {
  using detail::make_count;
  using detail::make_real;
  using detail::make_seed;
  static const std::vector<SchemaEntry> schema = {
      make_count("data.n_classes", "total synthetic classes", [](RunConfig& c) -> auto& { return c.bench.data.n_classes; }),
      make_count("data.n_seen", "seen (training) classes; the rest are unseen", [](RunConfig& c) -> auto& { return c.bench.data.n_seen; }),
      make_count("data.per_class", "samples per class per modality", [](RunConfig& c) -> auto& { return c.bench.data.per_class_per_modality; }),
      make_count("data.d_in", "input dimension", [](RunConfig& c) -> auto& { return c.bench.data.d_in; }),
      make_real("data.modality_gap", "scale of the sketch-only mixing perturbation", [](RunConfig& c) -> auto& { return c.bench.data.modality_gap; }),
      make_real("data.spread", "intra-class noise standard deviation", [](RunConfig& c) -> auto& { return c.bench.data.intra_class_spread; }),
      make_seed("data.seed", "dataset generator seed", [](RunConfig& c) -> auto& { return c.bench.data.seed; }),
      make_count("model.hidden", "hidden width H", [](RunConfig& c) -> auto& { return c.bench.hidden; }),
      make_count("model.d_emb", "embedding dimension", [](RunConfig& c) -> auto& { return c.bench.d_emb; }),
      make_count("model.k_src", "source-label classes (0: one per seen class)", [](RunConfig& c) -> auto& { return c.bench.k_src; }),
      make_seed("model.seed", "parameter initialization seed", [](RunConfig& c) -> auto& { return c.bench.init_seed; }),
      make_real("train.lambda_ma", "weight of the modality alignment term", [](RunConfig& c) -> auto& { return c.bench.train.lambda_ma; }),
      make_real("train.lambda_sem", "weight of the semantic prior inside soft labels", [](RunConfig& c) -> auto& { return c.bench.train.lambda_sem; }),
      make_real("train.lr_student_initial", "student learning rate at epoch 0", [](RunConfig& c) -> auto& { return c.bench.train.lr_student_initial; }),
      make_real("train.lr_student_final", "student learning rate at the last epoch", [](RunConfig& c) -> auto& { return c.bench.train.lr_student_final; }),
      make_real("train.lr_teacher_initial", "teacher learning rate at epoch 0", [](RunConfig& c) -> auto& { return c.bench.train.lr_teacher_initial; }),
      make_real("train.lr_teacher_final", "teacher learning rate at the last epoch", [](RunConfig& c) -> auto& { return c.bench.train.lr_teacher_final; }),
      make_count("train.warmup_epochs", "epochs with a frozen teacher (t)", [](RunConfig& c) -> auto& { return c.bench.train.warmup_epochs; }),
      make_count("train.total_epochs", "training epochs", [](RunConfig& c) -> auto& { return c.bench.train.total_epochs; }),
      make_count("train.batch_size", "samples per batch, half sketches and half photos", [](RunConfig& c) -> auto& { return c.bench.train.batch_size; }),
      make_count("train.pretrain_epochs", "teacher pretraining epochs", [](RunConfig& c) -> auto& { return c.bench.train.pretrain_epochs; }),
      make_real("train.pretrain_lr", "teacher pretraining learning rate", [](RunConfig& c) -> auto& { return c.bench.train.pretrain_lr; }),
      make_seed("train.shuffle_seed", "batch shuffling seed", [](RunConfig& c) -> auto& { return c.bench.train.shuffle_seed; }),
      make_seed("train.reference_seed", "seed of the alignment reference distribution", [](RunConfig& c) -> auto& { return c.bench.train.reference_seed; }),
      make_count("em.max_iters", "maximum EM iterations", [](RunConfig& c) -> auto& { return c.bench.em.max_iters; }),
      make_real("em.rel_tol", "relative log-likelihood improvement that stops EM", [](RunConfig& c) -> auto& { return c.bench.em.rel_tol; }),
      make_real("em.var_floor", "minimum per-dimension variance", [](RunConfig& c) -> auto& { return c.bench.em.var_floor; }),
      make_seed("em.seed", "k-means++ seeding seed", [](RunConfig& c) -> auto& { return c.bench.em.seed; }),
      make_count("em.init_rounds", "k-means++ restarts; the lowest-potential seeding wins", [](RunConfig& c) -> auto& { return c.bench.em.init_rounds; }),
      make_count("match.subspaces", "subspace count M", [](RunConfig& c) -> auto& { return c.bench.subspaces; }),
      make_count("match.clusters", "mixture components K per subspace (0: gallery class count)", [](RunConfig& c) -> auto& { return c.bench.clusters; }),
      make_count("eval.k", "cutoff for mAP@K and Prec@K", [](RunConfig& c) -> auto& { return c.bench.metric_k; }),
      make_seed("gradcheck.seed", "seed for random gradient-check instances", [](RunConfig& c) -> auto& { return c.gradcheck_seed; }),
      make_count("gradcheck.instances", "random instances per gradient-check component", [](RunConfig& c) -> auto& { return c.gradcheck_instances; }),
  };
  return schema;
}

inline const SchemaEntry& schema_entry(const std::string& key) {
  for (const auto& e : config_schema()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key '" + key + "' (see `sbka config` for the schema)");
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const nlohmann::json& value) {
  const SchemaEntry& e = schema_entry(key);
  const bool ok = e.type == KeyType::real ? value.is_number() : value.is_number_unsigned() ||
                                                                     (value.is_number_integer() && value.get<std::int64_t>() >= 0);
  if (!ok) {
    throw ConfigError("key '" + key + "' expects " + (e.type == KeyType::real ? "a number" : "a non-negative integer") +
                      ", got " + value.dump());
  }
  e.set(cfg, value);
}

/// `key=value` override, as given on the command line.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(assignment.substr(eq + 1));
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("override for '" + key + "' is not a number: " + assignment.substr(eq + 1));
  }
  set_config_value(cfg, key, value);
}

inline RunConfig parse_config(const std::string& text, const std::string& name = "config") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(name + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(name + ": top level must be an object of key/value pairs");
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) set_config_value(cfg, key, value);
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& p) {
  std::string text;
  try {
    text = read_file(p);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file " + p.string());
  }
  return parse_config(text, p.string());
}

inline std::string dump_config(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& e : config_schema()) j[e.key] = e.get(cfg);
  return j.dump(2) + "\n";
}

/// Rederives every seed from one master seed: seed(name) = derive_seed(master, name), with
/// names data, init, shuffle, reference, em and gradcheck.
inline void apply_master_seed(RunConfig& cfg, Seed master) {
  set_all_seeds(cfg.bench, master);
  cfg.gradcheck_seed = derive_seed(master, "gradcheck");
}

/// Checks that do not depend on data files.
inline void validate_config(const RunConfig& cfg) {
  const auto& b = cfg.bench;
  if (b.data.d_in == 0 || b.hidden == 0 || b.d_emb == 0) throw ConfigError("data.d_in, model.hidden and model.d_emb must be >= 1");
  if (b.subspaces == 0) throw ConfigError("match.subspaces must be >= 1");
  if (b.d_emb % b.subspaces != 0) {
    throw ConfigError("model.d_emb=" + std::to_string(b.d_emb) + " is not divisible by match.subspaces=" + std::to_string(b.subspaces));
  }
  if (b.metric_k == 0) throw ConfigError("eval.k must be >= 1");
  b.train.validate();
  b.em.validate();
}

}  // namespace sbka
