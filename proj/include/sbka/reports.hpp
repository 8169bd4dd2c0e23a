#pragma once

// Text artifacts: semantic prior tables, per-epoch training history, metric reports and the
// ablation table. Reals are printed with 17 significant digits so every file re-reads exactly.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sbka/dataset.hpp"
#include "sbka/io.hpp"
#include "sbka/metrics.hpp"
#include "sbka/pipeline.hpp"
#include "sbka/trainer.hpp"

namespace sbka {

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_real(const std::string& tok, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size() || !std::isfinite(v)) throw DataError(where + ": not a finite number: '" + tok + "'");
  return v;
}

// ---------------------------------------------------------------------------------------------
// Semantic prior: one row per training class, whitespace-separated reals.

inline std::string encode_prior(const SemanticPrior& p) {
  std::string out;
  for (std::size_t r = 0; r < p.table.rows; ++r) {
    for (std::size_t c = 0; c < p.table.cols; ++c) {
      if (c) out += ' ';
      out += format_real(p.table(r, c));
    }
    out += '\n';
  }
  return out;
}

inline SemanticPrior decode_prior(const std::string& text, const std::string& name = "prior") {
  std::istringstream in(text);
  std::string line;
  std::vector<Vector> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    Vector row;
    std::string tok;
    while (ls >> tok) row.push_back(parse_real(tok, name + ":" + std::to_string(line_no)));
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows[0].size()) {
      throw DataError(name + ":" + std::to_string(line_no) + ": expected " + std::to_string(rows[0].size()) +
                      " values, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(name + ": empty prior table");
  SemanticPrior p{Matrix(rows.size(), rows[0].size())};
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), &p.table(r, 0));
  return p;
}

// ---------------------------------------------------------------------------------------------
// Training history: tab-separated, one record per epoch after a header line.

inline constexpr const char* kHistoryHeader = "epoch\tl_cls\tl_ma\tl_ka_S\tl_ka_T\tlr_s\tlr_t\tfrozen";

/// `per_sample` divides each loss by the number of samples the epoch processed.
inline std::string encode_history(const TrainHistory& h, bool per_sample = false) {
  std::string out = std::string(kHistoryHeader) + "\n";
  for (const auto& e : h.epochs) {
    const double div = per_sample && e.samples > 0 ? static_cast<double>(e.samples) : 1.0;
    out += std::to_string(e.epoch) + '\t' + format_real(e.student.l_cls / div) + '\t' +
           format_real(e.student.l_ma / div) + '\t' + format_real(e.student.l_ka / div) + '\t' +
           format_real(e.l_ka_teacher / div) + '\t' + format_real(e.lr_student) + '\t' + format_real(e.lr_teacher) +
           '\t' + (e.teacher_frozen ? "1" : "0") + '\n';
  }
  return out;
}

/// Inverse of encode_history; totals are rebuilt as l_cls + l_ka + lambda_ma * l_ma.
inline TrainHistory decode_history(const std::string& text, double lambda_ma, const std::string& name = "history") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHistoryHeader) throw DataError(name + ": missing history header");
  TrainHistory h;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> f;
    std::string tok;
    while (std::getline(ls, tok, '\t')) f.push_back(tok);
    const std::string where = name + ":" + std::to_string(line_no);
    if (f.size() != 8) throw DataError(where + ": expected 8 fields");
    EpochRecord e;
    e.epoch = static_cast<std::size_t>(parse_real(f[0], where));
    e.student.l_cls = parse_real(f[1], where);
    e.student.l_ma = parse_real(f[2], where);
    e.student.l_ka = parse_real(f[3], where);
    e.student.total = e.student.l_cls + e.student.l_ka + lambda_ma * e.student.l_ma;
    e.l_ka_teacher = parse_real(f[4], where);
    e.lr_student = parse_real(f[5], where);
    e.lr_teacher = parse_real(f[6], where);
    if (f[7] != "0" && f[7] != "1") throw DataError(where + ": frozen flag must be 0 or 1");
    e.teacher_frozen = f[7] == "1";
    h.epochs.push_back(e);
  }
  return h;
}

// ---------------------------------------------------------------------------------------------
// Metrics report (JSON with fixed field names).

inline std::string encode_metrics(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["map_all"] = r.map_all;
  j["map_at_k"] = r.map_at_k;
  j["prec_at_k"] = r.prec_at_k;
  j["k"] = r.k;
  j["evaluated_queries"] = r.evaluated_queries;
  j["skipped_queries"] = r.skipped_queries;
  j["per_query_ap"] = r.per_query_ap;
  return j.dump(2) + "\n";
}

inline MetricsReport decode_metrics(const std::string& text, const std::string& name = "metrics") {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricsReport r;
    r.map_all = j.at("map_all").get<double>();
    r.map_at_k = j.at("map_at_k").get<double>();
    r.prec_at_k = j.at("prec_at_k").get<double>();
    r.k = j.at("k").get<std::size_t>();
    r.evaluated_queries = j.at("evaluated_queries").get<std::size_t>();
    r.skipped_queries = j.at("skipped_queries").get<std::size_t>();
    r.per_query_ap = j.at("per_query_ap").get<std::vector<double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(name + ": " + e.what());
  }
}

/// One line per query: query index, query label, then the ranked gallery indices.
inline std::string encode_rankings(std::span<const RankedResult> results) {
  std::string out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    out += std::to_string(i) + '\t' + std::to_string(results[i].query_label) + '\t';
    for (std::size_t k = 0; k < results[i].ranking.size(); ++k) {
      if (k) out += ' ';
      out += std::to_string(results[i].ranking[k]);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Ablation table: rows of (toggles, metric, mean, std).

inline std::string encode_ablation(const AblationTable& t) {
  std::string out = "row\tbidirectional\tone_to_many\tmetric\tmean\tstd\n";
  for (const auto& row : t.rows) {
    const Summary m = summarize(row.map_all);
    const Summary p = summarize(row.prec_at_k);
    const std::string toggles = row.name + '\t' + (row.bidirectional ? "1" : "0") + '\t' + (row.one_to_many ? "1" : "0");
    out += toggles + "\tmap_all\t" + format_real(m.mean) + '\t' + format_real(m.std) + '\n';
    out += toggles + "\tprec_at_" + std::to_string(t.metric_k) + '\t' + format_real(p.mean) + '\t' + format_real(p.std) + '\n';
  }
  return out;
}

/// One sensitivity setting: per-repetition one-to-many scores and their summary.
inline std::string encode_sweep_point(const std::string& parameter, const SweepPoint& pt) {
  nlohmann::ordered_json j;
  j["parameter"] = parameter;
  j["value"] = pt.value;
  std::vector<double> map_all, prec;
  for (const auto& r : pt.runs) {
    map_all.push_back(r.map_all);
    prec.push_back(r.prec_at_k);
  }
  j["map_all"] = map_all;
  j["prec_at_k"] = prec;
  j["map_all_mean"] = summarize(map_all).mean;
  j["prec_at_k_mean"] = summarize(prec).mean;
  j["k"] = pt.runs.empty() ? 0 : pt.runs.front().k;
  return j.dump(2) + "\n";
}

inline std::string read_text(const std::filesystem::path& p) { return read_file(p); }
inline void write_text(const std::filesystem::path& p, const std::string& s) { write_file(p, s); }

}  // namespace sbka
