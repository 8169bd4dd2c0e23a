#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sbka.hpp"

namespace fs = std::filesystem;
using namespace sbka;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("sbka_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write_text(path("tiny.json"), R"({
  "data.n_classes": 6, "data.n_seen": 3, "data.per_class": 4, "data.d_in": 8,
  "model.hidden": 8, "model.d_emb": 8, "match.subspaces": 2,
  "train.total_epochs": 3, "train.warmup_epochs": 1, "train.batch_size": 8, "train.pretrain_epochs": 2
})");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  RunResult run(const std::string& args) const {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = std::string("\"") + SBKA_CLI + "\" " + args + " > \"" + out + "\" 2> \"" + err + "\"";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text(out);
    r.err = read_text(err);
    return r;
  }

  RunResult tiny(const std::string& args) const { return run(args + " --config " + path("tiny.json")); }

  RunConfig tiny_config() const { return load_config(path("tiny.json")); }

  void gen(const std::string& prefix = "d", const std::string& extra = "") const {
    const auto r = tiny("gen-data --out " + path(prefix) + " " + extra);
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

Dataset as_dataset(const EmbeddingFile& f) {
  Dataset d;
  d.samples = f.samples;
  for (const auto& s : f.samples) {
    if (std::find(d.seen_classes.begin(), d.seen_classes.end(), s.label) == d.seen_classes.end()) d.seen_classes.push_back(s.label);
  }
  std::sort(d.seen_classes.begin(), d.seen_classes.end());
  return d;
}

std::vector<std::vector<std::uint32_t>> parse_rankings(const std::string& text, std::vector<std::uint32_t>& labels) {
  std::vector<std::vector<std::uint32_t>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::uint32_t idx = 0, label = 0, g = 0;
    ls >> idx >> label;
    labels.push_back(label);
    out.emplace_back();
    while (ls >> g) out.back().push_back(g);
  }
  return out;
}

}  // namespace

TEST_F(CliTest, GenDataIsDeterministic) {
  gen("a");
  gen("b");
  EXPECT_EQ(read_text(path("a.train.emb")), read_text(path("b.train.emb")));
  EXPECT_EQ(read_text(path("a.test.emb")), read_text(path("b.test.emb")));
  const auto train = read_embeddings(path("a.train.emb"));
  const auto test = read_embeddings(path("a.test.emb"));
  EXPECT_EQ(train.dim, 8u);
  EXPECT_EQ(train.samples.size(), 3u * 4u * 2u);
  EXPECT_EQ(test.samples.size(), 3u * 4u * 2u);
  for (const auto& s : train.samples) EXPECT_LT(s.label, 3u);
  for (const auto& s : test.samples) EXPECT_GE(s.label, 3u);
  gen("c", "--seed 99");
  EXPECT_NE(read_text(path("a.train.emb")), read_text(path("c.train.emb")));
}

TEST_F(CliTest, TrainWithZeroEpochsWritesInitialModels) {
  gen();
  const auto r = tiny("train --data " + path("d.train.emb") + " --out " + path("m") + " --set train.total_epochs=0 --set train.warmup_epochs=0");
  ASSERT_EQ(r.code, 0) << r.err;
  const RunConfig cfg = tiny_config();
  const auto [student, teacher] = initial_models(cfg.bench, as_dataset(read_embeddings(path("d.train.emb"))));
  EXPECT_EQ(read_text(path("m/student.ckpt")), encode_checkpoint(student));
  EXPECT_EQ(read_text(path("m/teacher.ckpt")), encode_checkpoint(teacher));
  EXPECT_EQ(read_text(path("m/history.tsv")), std::string(kHistoryHeader) + "\n");
}

TEST_F(CliTest, MissingPriorEqualsZeroPrior) {
  gen();
  write_text(path("zero.prior"), encode_prior(SemanticPrior::zeros(3, 3)));
  ASSERT_EQ(tiny("train --data " + path("d.train.emb") + " --out " + path("a")).code, 0);
  ASSERT_EQ(tiny("train --data " + path("d.train.emb") + " --prior " + path("zero.prior") + " --out " + path("b")).code, 0);
  for (const char* f : {"student.ckpt", "teacher.ckpt", "history.tsv"}) {
    EXPECT_EQ(read_text(path(std::string("a/") + f)), read_text(path(std::string("b/") + f))) << f;
  }
  write_text(path("bad.prior"), encode_prior(SemanticPrior::zeros(2, 3)));
  EXPECT_EQ(tiny("train --data " + path("d.train.emb") + " --prior " + path("bad.prior") + " --out " + path("c")).code, 2);
}

TEST_F(CliTest, HistoryMatchesGoldenTrace) {
  gen();
  const auto r = tiny("train --data " + path("d.train.emb") + " --out " + path("m"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string got = read_text(path("m/history.tsv"));
  const TrainHistory golden = decode_history(read_text(std::string(SBKA_GOLDEN_DIR) + "/tiny_history.tsv"), 0.1);
  const TrainHistory now = decode_history(got, 0.1);
  ASSERT_EQ(now.epochs.size(), golden.epochs.size());
  for (std::size_t e = 0; e < now.epochs.size(); ++e) {
    const auto& a = now.epochs[e];
    const auto& b = golden.epochs[e];
    EXPECT_NEAR(a.student.l_cls, b.student.l_cls, 1e-9 * std::max(1.0, std::abs(b.student.l_cls)));
    EXPECT_NEAR(a.student.l_ma, b.student.l_ma, 1e-9 * std::max(1.0, std::abs(b.student.l_ma)));
    EXPECT_NEAR(a.student.l_ka, b.student.l_ka, 1e-9 * std::max(1.0, std::abs(b.student.l_ka)));
    EXPECT_NEAR(a.l_ka_teacher, b.l_ka_teacher, 1e-9 * std::max(1.0, std::abs(b.l_ka_teacher)));
    EXPECT_EQ(a.lr_student, b.lr_student);
    EXPECT_EQ(a.teacher_frozen, b.teacher_frozen);
  }
  EXPECT_TRUE(now.epochs[0].teacher_frozen);
  EXPECT_FALSE(now.epochs[2].teacher_frozen);
}

TEST_F(CliTest, TrainRejectsDimensionMismatch) {
  gen();
  const auto r = tiny("train --data " + path("d.train.emb") + " --out " + path("m") + " --set data.d_in=9");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("d_in"), std::string::npos);
}

TEST_F(CliTest, SingleClusterCentroidIsGalleryMean) {
  gen();
  ASSERT_EQ(tiny("train --data " + path("d.train.emb") + " --out " + path("m")).code, 0);
  const auto r = tiny("fit-clusters --checkpoint " + path("m/student.ckpt") + " --gallery " + path("d.test.emb") +
                      " -M 1 -K 1 --out " + path("cb.bin"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto bytes = read_text(path("cb.bin"));
  const auto cb = decode_codebook(bytes);
  EXPECT_EQ(encode_codebook(cb), bytes);
  EXPECT_EQ(cb.subspaces, 1u);
  EXPECT_EQ(cb.clusters, 1u);
  EXPECT_EQ(cb.subdim, 8u);
  const ModelParams model = read_checkpoint(path("m/student.ckpt"));
  Vector mean(8, 0.0);
  std::size_t n = 0;
  for (const auto& s : read_embeddings(path("d.test.emb")).samples) {
    if (s.modality != Modality::photo) continue;
    const Vector e = forward(model, s.x).emb;
    for (std::size_t d = 0; d < 8; ++d) mean[d] += e[d];
    ++n;
  }
  ASSERT_EQ(cb.gallery_size(), n);
  for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(cb.models[0].means[0][d], mean[d] / static_cast<double>(n), 1e-5);
}

TEST_F(CliTest, IndivisibleSubspacesNamesBoth) {
  gen();
  ASSERT_EQ(tiny("train --data " + path("d.train.emb") + " --out " + path("m")).code, 0);
  const auto r = tiny("fit-clusters --checkpoint " + path("m/student.ckpt") + " --gallery " + path("d.test.emb") +
                      " -M 3 --out " + path("cb.bin"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("D_emb=8"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("M=3"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("cb.bin")));
}

TEST_F(CliTest, SelfRetrievalOnNoiselessGalleryIsPerfect) {
  gen("d", "--set data.spread=0");
  ASSERT_EQ(tiny("train --data " + path("d.train.emb") + " --out " + path("m")).code, 0);
  EmbeddingFile photos = read_embeddings(path("d.test.emb"));
  std::erase_if(photos.samples, [](const LabeledSample& s) { return s.modality != Modality::photo; });
  EmbeddingFile queries = photos;
  for (auto& s : queries.samples) s.modality = Modality::sketch;
  write_embeddings(path("g.emb"), photos);
  write_embeddings(path("q.emb"), queries);
  ASSERT_EQ(tiny("fit-clusters --checkpoint " + path("m/student.ckpt") + " --gallery " + path("g.emb") + " --out " + path("cb.bin")).code, 0);
  const auto r = tiny("retrieve-eval --checkpoint " + path("m/student.ckpt") + " --codebook " + path("cb.bin") + " --queries " +
                      path("q.emb") + " --gallery " + path("g.emb") + " --k 5");
  ASSERT_EQ(r.code, 0) << r.err;
  const MetricsReport rep = decode_metrics(r.out);
  EXPECT_DOUBLE_EQ(rep.map_all, 1.0);
  EXPECT_DOUBLE_EQ(rep.map_at_k, 1.0);
  EXPECT_EQ(rep.evaluated_queries, queries.samples.size());
}

TEST_F(CliTest, ReportAgreesWithRecomputationFromRankings) {
  gen();
  ASSERT_EQ(tiny("train --data " + path("d.train.emb") + " --out " + path("m")).code, 0);
  ASSERT_EQ(tiny("fit-clusters --checkpoint " + path("m/student.ckpt") + " --gallery " + path("d.test.emb") + " --out " + path("cb.bin")).code, 0);
  for (const std::string mode : {"", " --baseline"}) {
    const auto r = tiny("retrieve-eval --checkpoint " + path("m/student.ckpt") + " --codebook " + path("cb.bin") + " --queries " +
                        path("d.test.emb") + " --gallery " + path("d.test.emb") + " --k 3 --out " + path("rep.json") +
                        " --rankings " + path("rank.txt") + mode);
    ASSERT_EQ(r.code, 0) << r.err;
    std::vector<std::uint32_t> gallery_labels;
    for (const auto& s : read_embeddings(path("d.test.emb")).samples) {
      if (s.modality == Modality::photo) gallery_labels.push_back(s.label);
    }
    std::vector<std::uint32_t> query_labels;
    const auto rankings = parse_rankings(read_text(path("rank.txt")), query_labels);
    double sum_all = 0.0, sum_k = 0.0;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
      ASSERT_EQ(rankings[q].size(), gallery_labels.size());
      std::size_t total = 0;
      for (auto l : gallery_labels) total += l == query_labels[q];
      double ap = 0.0, ap_k = 0.0;
      std::size_t hits = 0;
      for (std::size_t pos = 0; pos < rankings[q].size(); ++pos) {
        if (gallery_labels[rankings[q][pos]] != query_labels[q]) continue;
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(pos + 1);
        if (pos < 3) ap_k += static_cast<double>(hits) / static_cast<double>(pos + 1);
      }
      sum_all += ap / static_cast<double>(total);
      sum_k += ap_k / static_cast<double>(std::min<std::size_t>(total, 3));
    }
    const MetricsReport rep = decode_metrics(read_text(path("rep.json")));
    EXPECT_NEAR(rep.map_all, sum_all / static_cast<double>(rankings.size()), 1e-12);
    EXPECT_NEAR(rep.map_at_k, sum_k / static_cast<double>(rankings.size()), 1e-12);
    EXPECT_NE(r.err.find(mode.empty() ? "one-to-many" : "one-to-one"), std::string::npos);
  }
}

TEST_F(CliTest, CodebookGalleryMismatchIsDataError) {
  gen();
  ASSERT_EQ(tiny("train --data " + path("d.train.emb") + " --out " + path("m")).code, 0);
  ASSERT_EQ(tiny("fit-clusters --checkpoint " + path("m/student.ckpt") + " --gallery " + path("d.test.emb") + " -K 2 --out " + path("cb.bin")).code, 0);
  EmbeddingFile smaller = read_embeddings(path("d.test.emb"));
  smaller.samples.pop_back();
  write_embeddings(path("small.emb"), smaller);
  const auto r = tiny("retrieve-eval --checkpoint " + path("m/student.ckpt") + " --codebook " + path("cb.bin") + " --queries " +
                      path("d.test.emb") + " --gallery " + path("small.emb"));
  EXPECT_EQ(r.code, 3);
}

TEST_F(CliTest, CorruptedFileIsDataError) {
  gen();
  std::string bytes = read_text(path("d.train.emb"));
  bytes[0] = 'x';
  write_text(path("bad.emb"), bytes);
  const auto r = tiny("train --data " + path("bad.emb") + " --out " + path("m"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("SBKAEMB1"), std::string::npos);
  EXPECT_NE(r.err.find("offset 0"), std::string::npos);
  EXPECT_EQ(tiny("train --data " + path("missing.emb") + " --out " + path("m")).code, 3);
}

TEST_F(CliTest, GradcheckPassesAcrossSeeds) {
  const auto r = run("gradcheck");
  ASSERT_EQ(r.code, 0) << r.out;
  std::size_t lines = 0;
  for (const char* name : {"encoder", "l_cls", "l_ma", "soft_label_chain", "l_ka", "composite"}) {
    EXPECT_NE(r.out.find(std::string(name) + " "), std::string::npos) << name;
  }
  for (std::size_t p = r.out.find("worst_rel_err"); p != std::string::npos; p = r.out.find("worst_rel_err", p + 1)) ++lines;
  EXPECT_EQ(lines, 6u);
  for (int s = 1; s <= 10; ++s) {
    EXPECT_EQ(run("gradcheck --seed " + std::to_string(s) + " --set gradcheck.instances=5").code, 0) << "seed " << s;
  }
}

TEST_F(CliTest, ConfigErrorsExitTwo) {
  EXPECT_EQ(run("config --set train.no_such_key=1").code, 2);
  write_text(path("bad.json"), R"({"train.lambda_ma": "x"})");
  EXPECT_EQ(run("config --config " + path("bad.json")).code, 2);
  EXPECT_EQ(run("config --config " + path("absent.json")).code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("config --set model.d_emb=30").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(CliTest, ConfigPrintsEffectiveValues) {
  const auto r = tiny("config --set train.lambda_ma=0.5");
  ASSERT_EQ(r.code, 0);
  const RunConfig cfg = parse_config(r.out);
  EXPECT_EQ(cfg.bench.train.lambda_ma, 0.5);
  EXPECT_EQ(cfg.bench.data.n_classes, 6u);
  const auto s = run("config --schema");
  ASSERT_EQ(s.code, 0);
  for (const auto& e : config_schema()) EXPECT_NE(s.out.find(e.key), std::string::npos) << e.key;
}

TEST_F(CliTest, SweepWritesOneReportPerSetting) {
  const auto r = tiny("sweep --param lambda_ma --values 0.1 1 --reps 2 --out " + path("sw"));
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(path("sw"))) {
    ++files;
    const auto j = nlohmann::json::parse(read_text(e.path()));
    EXPECT_EQ(j.at("parameter"), "train.lambda_ma");
    EXPECT_EQ(j.at("map_all").size(), 2u);
  }
  EXPECT_EQ(files, 2u);
  const auto c = tiny("sweep --param clusters --values 2 3 4 --reps 1 --out " + path("sc"));
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(std::distance(fs::directory_iterator(path("sc")), fs::directory_iterator{}), 3);
  EXPECT_EQ(tiny("sweep --param bogus --out " + path("x")).code, 2);
}

TEST_F(CliTest, AblationTableHasThreeRows) {
  const auto r = tiny("ablation --reps 1");
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t lines = 0;
  for (char c : r.out) lines += c == '\n';
  EXPECT_EQ(lines, 1u + 3u * 2u);
}
