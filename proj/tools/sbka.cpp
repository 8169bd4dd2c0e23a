// sbka: data generation, training, codebook fitting, retrieval evaluation, ablation, sweeps and
// gradient self-check over the synthetic benchmark.
//
// Every command accepts --config FILE, --seed N (rederives all seeds) and repeated --set key=value;
// later sources win. Exit codes: 0 ok, 2 config error, 3 data/format error, 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sbka.hpp"

namespace fs = std::filesystem;
using namespace sbka;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (flat keys, see `sbka config --schema`)");
  cmd->add_option("--seed", o.seed, "master seed; rederives every seed in the config");
  cmd->add_option("--set", o.overrides, "override one key, e.g. --set train.lambda_ma=1")->take_all();
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  if (o.seed) apply_master_seed(cfg, Seed{*o.seed});
  for (const auto& kv : o.overrides) apply_override(cfg, kv);
  validate_config(cfg);
  return cfg;
}

Dataset dataset_from_file(const EmbeddingFile& f) {
  Dataset d;
  d.samples = f.samples;
  std::vector<std::uint32_t> labels;
  for (const auto& s : f.samples) labels.push_back(s.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  d.seen_classes = labels;
  return d;
}

std::vector<LabeledSample> of_modality(const EmbeddingFile& f, Modality m) {
  std::vector<LabeledSample> out;
  for (const auto& s : f.samples) {
    if (s.modality == m) out.push_back(s);
  }
  return out;
}

std::string class_range(const std::vector<std::uint32_t>& c) {
  if (c.empty()) return "none";
  return std::to_string(c.front()) + ".." + std::to_string(c.back());
}

int cmd_config(const CommonOptions& o, bool schema) {
  const RunConfig cfg = resolve(o);
  if (schema) {
    const RunConfig defaults;
    for (const auto& e : config_schema()) {
      std::printf("%-26s %-6s default %-22s %s\n", e.key.c_str(),
                  e.type == KeyType::real ? "real" : (e.type == KeyType::seed ? "seed" : "count"),
                  e.get(defaults).dump().c_str(), e.help.c_str());
    }
    return 0;
  }
  std::cout << dump_config(cfg);
  return 0;
}

int cmd_gen_data(const CommonOptions& o, const std::string& prefix) {
  const RunConfig cfg = resolve(o);
  const Dataset d = generate_synthetic_dataset(cfg.bench.data);
  const auto dim = static_cast<std::uint32_t>(cfg.bench.data.d_in);
  const EmbeddingFile train{dim, d.select(true)};
  const EmbeddingFile test{dim, d.select(false)};
  write_embeddings(prefix + ".train.emb", train);
  write_embeddings(prefix + ".test.emb", test);
  std::printf("seen classes %zu (%s), unseen classes %zu (%s)\n", d.seen_classes.size(),
              class_range(d.seen_classes).c_str(), d.unseen_classes.size(), class_range(d.unseen_classes).c_str());
  std::printf("%s.train.emb: %zu samples, %s.test.emb: %zu samples, dim %u\n", prefix.c_str(), train.samples.size(),
              prefix.c_str(), test.samples.size(), dim);
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& data_path, const std::string& prior_path,
              const std::string& out_dir, bool per_sample) {
  const RunConfig cfg = resolve(o);
  const ModelDims dims = cfg.bench.dims();
  const EmbeddingFile file = read_embeddings(data_path);
  if (file.dim != dims.d_in) {
    throw ConfigError(data_path + ": data dim " + std::to_string(file.dim) + " does not match data.d_in=" +
                      std::to_string(dims.d_in));
  }
  for (const auto& s : file.samples) {
    if (s.label >= dims.k_train) {
      throw ConfigError(data_path + ": label " + std::to_string(s.label) + " does not fit data.n_seen=" +
                        std::to_string(dims.k_train));
    }
  }
  SemanticPrior prior = SemanticPrior::zeros(dims.k_train, dims.k_src);
  if (!prior_path.empty()) {
    prior = decode_prior(read_file(prior_path), prior_path);
    if (prior.table.rows != dims.k_train || prior.table.cols != dims.k_src) {
      throw ConfigError(prior_path + ": prior is " + std::to_string(prior.table.rows) + "x" +
                        std::to_string(prior.table.cols) + ", expected " + std::to_string(dims.k_train) + "x" +
                        std::to_string(dims.k_src));
    }
  }
  const TrainResult r = train_models(cfg.bench, dataset_from_file(file), prior);
  fs::create_directories(out_dir);
  write_checkpoint(fs::path(out_dir) / "student.ckpt", r.student);
  write_checkpoint(fs::path(out_dir) / "teacher.ckpt", r.teacher);
  write_text(fs::path(out_dir) / "history.tsv", encode_history(r.history, per_sample));
  std::printf("trained %zu epochs on %zu samples; wrote %s/{student.ckpt,teacher.ckpt,history.tsv}\n",
              r.history.epochs.size(), file.samples.size(), out_dir.c_str());
  return 0;
}

int cmd_fit_clusters(const CommonOptions& o, const std::string& ckpt_path, const std::string& gallery_path,
                     std::optional<std::size_t> m_opt, std::optional<std::size_t> k_opt, const std::string& out) {
  const RunConfig cfg = resolve(o);
  const ModelParams model = read_checkpoint(ckpt_path);
  const EmbeddingFile gallery_file = read_embeddings(gallery_path);
  if (gallery_file.dim != model.dims().d_in) throw DataError(gallery_path + ": dim does not match checkpoint d_in");
  const auto photos = of_modality(gallery_file, Modality::photo);
  if (photos.empty()) throw DataError(gallery_path + ": no gallery photos");
  const std::size_t m = m_opt.value_or(cfg.bench.subspaces);
  const std::size_t d_emb = model.dims().d_emb;
  if (m == 0 || d_emb % m != 0) {
    throw ConfigError("embedding dimension D_emb=" + std::to_string(d_emb) + " is not divisible by M=" + std::to_string(m));
  }
  std::vector<std::uint32_t> labels;
  for (const auto& s : photos) labels.push_back(s.label);
  const std::size_t k = k_opt.value_or(cfg.bench.clusters == 0 ? distinct_count(labels) : cfg.bench.clusters);
  const SubspaceCodebook cb = fit_subspace_codebook(embed(model, photos), m, k, cfg.bench.em);
  write_codebook(out, cb);
  std::printf("codebook M=%zu K=%zu subdim=%zu over %zu gallery photos -> %s\n", cb.subspaces, cb.clusters, cb.subdim,
              cb.gallery_size(), out.c_str());
  return 0;
}

int cmd_retrieve_eval(const CommonOptions& o, const std::string& ckpt_path, const std::string& cb_path,
                      const std::string& query_path, const std::string& gallery_path, std::optional<std::size_t> k_opt,
                      bool baseline, const std::string& out, const std::string& rankings_out) {
  const RunConfig cfg = resolve(o);
  const ModelParams model = read_checkpoint(ckpt_path);
  const EmbeddingFile qf = read_embeddings(query_path);
  const EmbeddingFile gf = read_embeddings(gallery_path);
  for (const auto* f : {&qf, &gf}) {
    if (f->dim != model.dims().d_in) {
      throw DataError((f == &qf ? query_path : gallery_path) + ": dim " + std::to_string(f->dim) +
                      " does not match checkpoint d_in=" + std::to_string(model.dims().d_in));
    }
  }
  const auto queries = of_modality(qf, Modality::sketch);
  const auto photos = of_modality(gf, Modality::photo);
  if (queries.empty()) throw DataError(query_path + ": no sketch queries");
  if (photos.empty()) throw DataError(gallery_path + ": no gallery photos");

  RetrievalSet set;
  set.queries = embed(model, queries);
  set.gallery = embed(model, photos);
  for (const auto& s : queries) set.query_labels.push_back(s.label);
  for (const auto& s : photos) set.gallery_labels.push_back(s.label);

  std::optional<SubspaceCodebook> cb;
  if (!baseline) {
    if (cb_path.empty()) throw ConfigError("--codebook is required unless --baseline is given");
    cb = read_codebook(cb_path);
    if (cb->gallery_size() != photos.size()) {
      throw DataError(cb_path + ": codebook covers " + std::to_string(cb->gallery_size()) + " gallery items, gallery has " +
                      std::to_string(photos.size()));
    }
    if (cb->dim() != model.dims().d_emb) {
      throw DataError(cb_path + ": codebook dim " + std::to_string(cb->dim()) + " does not match checkpoint d_emb=" +
                      std::to_string(model.dims().d_emb));
    }
  }
  const RetrievalOutput r = run_retrieval(set, cb ? &*cb : nullptr, k_opt.value_or(cfg.bench.metric_k));
  const std::string report = encode_metrics(r.report);
  if (out.empty()) {
    std::cout << report;
  } else {
    write_text(out, report);
  }
  if (!rankings_out.empty()) write_text(rankings_out, encode_rankings(r.rankings));
  std::fprintf(stderr, "%s: mAP@all %.4f  mAP@%zu %.4f  Prec@%zu %.4f  (%zu queries, %zu skipped)\n",
               baseline ? "one-to-one" : "one-to-many", r.report.map_all, r.report.k, r.report.map_at_k, r.report.k,
               r.report.prec_at_k, r.report.evaluated_queries, r.report.skipped_queries);
  return 0;
}

int cmd_gradcheck(const CommonOptions& o) {
  const RunConfig cfg = resolve(o);
  const GradcheckReport rep = run_gradcheck(cfg.gradcheck_seed, cfg.gradcheck_instances);
  for (const auto& c : rep.components) {
    std::printf("%-18s worst_rel_err %.3e over %zu instances  %s\n", c.name.c_str(), c.worst_relative_error, c.instances,
                c.passed() ? "PASS" : "FAIL");
  }
  std::printf("gradcheck %s (tolerance %.0e)\n", rep.passed() ? "PASS" : "FAIL", kGradTolerance);
  return rep.passed() ? 0 : static_cast<int>(ExitCode::numeric);
}

int cmd_ablation(const CommonOptions& o, std::size_t reps, const std::string& out) {
  const RunConfig cfg = resolve(o);
  const std::string table = encode_ablation(run_ablation(cfg.bench, reps));
  if (out.empty()) {
    std::cout << table;
  } else {
    write_text(out, table);
  }
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& param, const std::vector<double>& values, std::size_t reps,
              const std::string& out_dir) {
  const RunConfig cfg = resolve(o);
  SweepResult r;
  if (param == "lambda_ma") {
    const std::vector<double> v = values.empty() ? std::vector<double>{0.01, 0.1, 1.0, 10.0} : values;
    r = run_lambda_sweep(cfg.bench, v, reps);
  } else if (param == "clusters") {
    std::vector<std::size_t> ks;
    if (values.empty()) {
      const std::size_t truth = cfg.bench.data.n_classes - cfg.bench.data.n_seen;
      for (std::size_t k = truth > 2 ? truth - 2 : 1; k <= truth + 2; ++k) ks.push_back(k);
    }
    for (double v : values) {
      if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) {
        throw ConfigError("cluster counts must be positive integers");
      }
      ks.push_back(static_cast<std::size_t>(v));
    }
    r = run_cluster_sweep(cfg.bench, ks, reps);
  } else {
    throw ConfigError("unknown sweep parameter '" + param + "' (expected lambda_ma or clusters)");
  }
  fs::create_directories(out_dir);
  for (const auto& pt : r.points) {
    const fs::path file = fs::path(out_dir) / (param + "_" + format_real(pt.value) + ".json");
    write_text(file, encode_sweep_point(r.parameter, pt));
    std::vector<double> maps;
    for (const auto& run : pt.runs) maps.push_back(run.map_all);
    std::printf("%s=%s  mAP@all mean %.4f  -> %s\n", param.c_str(), format_real(pt.value).c_str(), summarize(maps).mean,
                file.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sbka: bidirectional knowledge alignment with one-to-many cluster matching (synthetic benchmark)"};
  app.require_subcommand(1);
  CommonOptions common;

  bool schema = false;
  auto* config = app.add_subcommand("config", "print the effective config, or the schema with --schema");
  add_common(config, common);
  config->add_flag("--schema", schema, "list every key with its type, default and meaning");

  std::string prefix;
  auto* gen = app.add_subcommand("gen-data", "write <out>.train.emb (seen classes) and <out>.test.emb (unseen)");
  add_common(gen, common);
  gen->add_option("--out", prefix, "output path prefix")->required();

  std::string data, prior, out_dir;
  bool per_sample = false;
  auto* train = app.add_subcommand("train", "pretrain the teacher, then run alternating training");
  add_common(train, common);
  train->add_option("--data", data, "training embedding file")->required();
  train->add_option("--prior", prior, "semantic prior table (k_train rows of k_src reals); default all zero");
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_flag("--mean-loss", per_sample, "report per-sample mean losses in the history instead of sums");

  std::string ckpt, gallery, out;
  std::optional<std::size_t> m_opt, k_opt;
  auto* fit = app.add_subcommand("fit-clusters", "fit the subspace codebook on embedded gallery photos");
  add_common(fit, common);
  fit->add_option("--checkpoint", ckpt, "student checkpoint")->required();
  fit->add_option("--gallery", gallery, "gallery embedding file")->required();
  fit->add_option("--subspaces,-M", m_opt, "subspace count (default match.subspaces)");
  fit->add_option("--clusters,-K", k_opt, "components per subspace (default: gallery class count)");
  fit->add_option("--out", out, "codebook output file")->required();

  std::string codebook, queries, rankings;
  std::optional<std::size_t> metric_k;
  bool baseline = false;
  auto* eval = app.add_subcommand("retrieve-eval", "rank gallery photos for every sketch query and score");
  add_common(eval, common);
  eval->add_option("--checkpoint", ckpt, "student checkpoint")->required();
  eval->add_option("--codebook", codebook, "codebook from fit-clusters");
  eval->add_option("--queries", queries, "query embedding file (sketches are used)")->required();
  eval->add_option("--gallery", gallery, "gallery embedding file (photos are used)")->required();
  eval->add_option("--k", metric_k, "cutoff for mAP@K and Prec@K (default eval.k)");
  eval->add_flag("--baseline", baseline, "one-to-one matching (embedding distance only)");
  eval->add_option("--out", out, "metrics report file (default stdout)");
  eval->add_option("--rankings", rankings, "write per-query rankings here");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every analytic gradient");
  add_common(grad, common);

  std::size_t reps = 5;
  auto* abl = app.add_subcommand("ablation", "frozen teacher vs bidirectional vs bidirectional + one-to-many");
  add_common(abl, common);
  abl->add_option("--reps", reps, "seeded repetitions")->check(CLI::PositiveNumber);
  abl->add_option("--out", out, "TSV output (default stdout)");

  std::string param;
  std::vector<double> values;
  auto* sweep = app.add_subcommand("sweep", "sensitivity sweep over lambda_ma or the cluster count");
  add_common(sweep, common);
  sweep->add_option("--param", param, "lambda_ma or clusters")->required();
  sweep->add_option("--values", values, "settings (default 0.01 0.1 1 10, or true count +-2)")->take_all();
  sweep->add_option("--reps", reps, "seeded repetitions")->check(CLI::PositiveNumber);
  sweep->add_option("--out", out_dir, "directory for one JSON report per setting")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  try {
    if (config->parsed()) return cmd_config(common, schema);
    if (gen->parsed()) return cmd_gen_data(common, prefix);
    if (train->parsed()) return cmd_train(common, data, prior, out_dir, per_sample);
    if (fit->parsed()) return cmd_fit_clusters(common, ckpt, gallery, m_opt, k_opt, out);
    if (eval->parsed()) return cmd_retrieve_eval(common, ckpt, codebook, queries, gallery, metric_k, baseline, out, rankings);
    if (grad->parsed()) return cmd_gradcheck(common);
    if (abl->parsed()) return cmd_ablation(common, reps, out);
    if (sweep->parsed()) return cmd_sweep(common, param, values, reps, out_dir);
  } catch (const Error& e) {
    std::fprintf(stderr, "sbka: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "sbka: %s\n", e.what());
    return static_cast<int>(ExitCode::data);
  }
  return 0;
}
