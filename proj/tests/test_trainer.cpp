#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "sbka/pipeline.hpp"
#include "sbka/trainer.hpp"

#include "hand_trace.hpp"

using namespace sbka;

namespace {

Dataset tiny_dataset(std::uint64_t seed, std::size_t d_in) {
  SyntheticSpec spec;
  spec.n_classes = 4;
  spec.n_seen = 2;
  spec.per_class_per_modality = 3;
  spec.d_in = d_in;
  spec.seed = Seed{seed};
  return generate_synthetic_dataset(spec);
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.total_epochs = 4;
  cfg.warmup_epochs = 2;
  cfg.batch_size = 4;
  cfg.lr_student_initial = cfg.lr_teacher_initial = 1e-2;
  cfg.lr_student_final = cfg.lr_teacher_final = 1e-3;
  return cfg;
}

}  // namespace

TEST(SyntheticData, DegenerateGeneratorGivesIdenticalModalities) {
  SyntheticSpec spec;
  spec.n_classes = 5;
  spec.n_seen = 3;
  spec.per_class_per_modality = 2;
  spec.d_in = 4;
  spec.modality_gap = 0.0;
  spec.intra_class_spread = 0.0;
  const Dataset d = generate_synthetic_dataset(spec);
  for (const auto& a : d.samples) {
    for (const auto& b : d.samples) {
      if (a.label == b.label) {
        EXPECT_EQ(a.x, b.x);
      }
    }
  }
}

TEST(SyntheticData, DeterministicAndSplit) {
  SyntheticSpec spec;
  spec.n_classes = 10;
  spec.n_seen = 8;
  EXPECT_EQ(generate_synthetic_dataset(spec), generate_synthetic_dataset(spec));
  const Dataset d = generate_synthetic_dataset(spec);
  EXPECT_EQ(d.unseen_classes.size(), 2u);
  std::set<std::uint32_t> seen(d.seen_classes.begin(), d.seen_classes.end());
  for (auto c : d.unseen_classes) EXPECT_EQ(seen.count(c), 0u);
  for (const auto& s : d.samples) EXPECT_NE(d.is_seen(s.label), std::count(d.unseen_classes.begin(), d.unseen_classes.end(), s.label) == 1);
  std::size_t sketches = 0;
  for (const auto& s : d.samples) sketches += s.modality == Modality::sketch;
  EXPECT_EQ(sketches, d.samples.size() / 2);
}

TEST(SyntheticData, InvalidCountsAreConfigErrors) {
  SyntheticSpec spec;
  spec.n_seen = spec.n_classes;
  EXPECT_THROW(generate_synthetic_dataset(spec), ConfigError);
  spec.n_seen = 1;
  EXPECT_THROW(generate_synthetic_dataset(spec), ConfigError);
  spec.n_seen = 3;
  spec.per_class_per_modality = 1;
  EXPECT_THROW(generate_synthetic_dataset(spec), ConfigError);
}

TEST(Batches, StratifiedAndCoverEverySample) {
  const Dataset d = tiny_dataset(1, 3);
  const auto seen = d.select(true);
  CounterRng rng(Seed{5});
  const auto batches = make_stratified_batches(seen, 4, rng);
  for (const auto& b : batches) {
    ASSERT_EQ(b.size(), 4u);
    EXPECT_EQ(b[0].modality, Modality::sketch);
    EXPECT_EQ(b[1].modality, Modality::sketch);
    EXPECT_EQ(b[2].modality, Modality::photo);
    EXPECT_EQ(b[3].modality, Modality::photo);
  }
  EXPECT_EQ(batches.size(), 3u);  // 6 sketches and 6 photos, 2 of each per batch
  std::multiset<Vector> got, want;
  for (const auto& b : batches) {
    for (const auto& s : b) got.insert(s.x);
  }
  for (const auto& s : seen) want.insert(s.x);
  EXPECT_EQ(got, want);
}

TEST(Pretrain, ZeroEpochsIsNoOp) {
  const Dataset d = tiny_dataset(2, 3);
  TrainConfig cfg;
  cfg.pretrain_epochs = 0;
  const ModelParams init = init_params({3, 4, 2, 2, 2}, Seed{1});
  EXPECT_EQ(pretrain_teacher(init, d, cfg, Seed{3}), init);
}

TEST(Pretrain, NoPhotosIsDataError) {
  Dataset d = tiny_dataset(2, 3);
  std::erase_if(d.samples, [](const LabeledSample& s) { return s.modality == Modality::photo; });
  EXPECT_THROW(pretrain_teacher(init_params({3, 4, 2, 2, 2}, Seed{1}), d, TrainConfig{}, Seed{3}), DataError);
}

TEST(Pretrain, ReachesNinetyPercentOnCleanData) {
  SyntheticSpec spec;
  spec.n_classes = 10;
  spec.n_seen = 8;
  spec.intra_class_spread = 0.1;
  const Dataset d = generate_synthetic_dataset(spec);
  const ModelDims dims{spec.d_in, 64, 32, 8, 8};
  TrainConfig cfg;
  const ModelParams t = pretrain_teacher(init_params(dims, Seed{4}), d, cfg, Seed{5});
  EXPECT_GE(source_head_accuracy(t, d, Modality::photo), 0.9);
  EXPECT_EQ(pretrain_teacher(init_params(dims, Seed{4}), d, cfg, Seed{5}), t);
}

TEST(Train, HistoryShapeAndFrozenFlags) {
  const Dataset d = tiny_dataset(3, 3);
  const ModelDims dims{3, 4, 2, 2, 3};
  const TrainConfig cfg = quick_config();
  const auto r = train_sbka(init_params(dims, Seed{1}), init_params(dims, Seed{2}), d, one_hot_prior(2, 3), cfg);
  ASSERT_EQ(r.history.epochs.size(), cfg.total_epochs);
  for (std::size_t e = 0; e < cfg.total_epochs; ++e) {
    const auto& rec = r.history.epochs[e];
    EXPECT_EQ(rec.epoch, e);
    EXPECT_EQ(rec.teacher_frozen, e < cfg.warmup_epochs);
    EXPECT_DOUBLE_EQ(rec.lr_student, cosine_lr(1e-2, 1e-3, e, cfg.total_epochs));
    EXPECT_NEAR(rec.student.total, rec.student.l_cls + rec.student.l_ka + cfg.lambda_ma * rec.student.l_ma, 1e-9);
  }
}

TEST(Train, TeacherBitIdenticalDuringWarmup) {
  const Dataset d = tiny_dataset(4, 3);
  const ModelDims dims{3, 4, 2, 2, 3};
  TrainConfig cfg = quick_config();
  const ModelParams teacher = init_params(dims, Seed{2});
  for (std::size_t t = 0; t <= cfg.total_epochs; ++t) {
    // Stopping after epoch t-1 with warm-up t must leave the teacher untouched.
    TrainConfig c = cfg;
    c.total_epochs = t;
    c.warmup_epochs = t;
    const auto r = train_sbka(init_params(dims, Seed{1}), teacher, d, one_hot_prior(2, 3), c);
    EXPECT_EQ(r.teacher, teacher);
  }
  const auto moved = train_sbka(init_params(dims, Seed{1}), teacher, d, one_hot_prior(2, 3), cfg);
  EXPECT_NE(moved.teacher, teacher);
}

TEST(Train, FullFreezeIsUnidirectionalDistillation) {
  const Dataset d = tiny_dataset(5, 3);
  const ModelDims dims{3, 4, 2, 2, 3};
  TrainConfig cfg = quick_config();
  cfg.warmup_epochs = cfg.total_epochs;
  const ModelParams teacher = init_params(dims, Seed{2});
  const auto r = train_sbka(init_params(dims, Seed{1}), teacher, d, one_hot_prior(2, 3), cfg);
  EXPECT_EQ(r.teacher, teacher);

  // Same student trajectory as a loop that never touches the teacher.
  ModelParams student = init_params(dims, Seed{1});
  ModelParams frozen = teacher;
  AdamState sa(dims), ta(dims);
  CounterRng rng(cfg.shuffle_seed);
  const auto ref = build_reference(cfg.reference_seed, dims.d_emb);
  for (std::size_t e = 0; e < cfg.total_epochs; ++e) {
    const double lr = cosine_lr(cfg.lr_student_initial, cfg.lr_student_final, e, cfg.total_epochs);
    for (const auto& b : make_stratified_batches(d.select(true), cfg.batch_size, rng)) {
      sbka_step(student, frozen, sa, ta, b, one_hot_prior(2, 3), ref, cfg, lr, 0.0, false);
    }
  }
  EXPECT_EQ(r.student, student);
}

TEST(Train, ZeroLearningRatesLeaveModelsButRecordHistory) {
  const Dataset d = tiny_dataset(6, 3);
  const ModelDims dims{3, 4, 2, 2, 3};
  TrainConfig cfg = quick_config();
  cfg.lr_student_initial = cfg.lr_student_final = cfg.lr_teacher_initial = cfg.lr_teacher_final = 0.0;
  const ModelParams s = init_params(dims, Seed{1}), t = init_params(dims, Seed{2});
  const auto r = train_sbka(s, t, d, one_hot_prior(2, 3), cfg);
  EXPECT_EQ(r.student, s);
  EXPECT_EQ(r.teacher, t);
  EXPECT_EQ(r.history.epochs.size(), cfg.total_epochs);
}

TEST(Train, Deterministic) {
  const Dataset d = tiny_dataset(7, 3);
  const ModelDims dims{3, 4, 2, 2, 3};
  const auto a = train_sbka(init_params(dims, Seed{1}), init_params(dims, Seed{2}), d, one_hot_prior(2, 3), quick_config());
  const auto b = train_sbka(init_params(dims, Seed{1}), init_params(dims, Seed{2}), d, one_hot_prior(2, 3), quick_config());
  EXPECT_EQ(a.student, b.student);
  EXPECT_EQ(a.teacher, b.teacher);
  EXPECT_EQ(a.history, b.history);
}

TEST(Train, IncompatibleInputs) {
  const Dataset d = tiny_dataset(8, 3);
  const ModelDims dims{3, 4, 2, 2, 3};
  const TrainConfig cfg = quick_config();
  EXPECT_THROW(train_sbka(init_params(dims, Seed{1}), init_params(dims, Seed{2}), d, one_hot_prior(2, 2), cfg),
               DimensionError);
  EXPECT_THROW(train_sbka(init_params({4, 4, 2, 2, 3}, Seed{1}), init_params({4, 4, 2, 2, 3}, Seed{2}), d,
                          one_hot_prior(2, 3), cfg),
               DimensionError);
  TrainConfig bad = cfg;
  bad.warmup_epochs = bad.total_epochs + 1;
  EXPECT_THROW(train_sbka(init_params(dims, Seed{1}), init_params(dims, Seed{2}), d, one_hot_prior(2, 3), bad),
               ConfigError);
}

TEST(Train, SingleStepMatchesHandTrace) {
  const auto dev = hand_trace::single_step_deviation();
  EXPECT_LT(dev.student, 1e-10);
  EXPECT_LT(dev.teacher, 1e-10);
}

TEST(Pipeline, TrainBenchmarkDeterministic) {
  BenchmarkConfig cfg = default_benchmark();
  cfg.data.n_classes = 6;
  cfg.data.n_seen = 4;
  cfg.data.per_class_per_modality = 4;
  cfg.train.total_epochs = 2;
  cfg.train.warmup_epochs = 1;
  cfg.train.pretrain_epochs = 2;
  const auto a = train_benchmark(cfg);
  const auto b = train_benchmark(cfg);
  EXPECT_EQ(a.student, b.student);
  EXPECT_EQ(a.teacher, b.teacher);
  EXPECT_EQ(a.history, b.history);
}

TEST(Pipeline, AblationWithoutTrainingDiffersOnlyByMatching) {
  BenchmarkConfig cfg = default_benchmark();
  cfg.data.n_classes = 8;
  cfg.data.n_seen = 5;
  cfg.data.per_class_per_modality = 6;
  cfg.d_emb = 8;
  cfg.subspaces = 2;
  cfg.train.total_epochs = 3;
  cfg.train.warmup_epochs = 1;
  cfg.train.lr_student_initial = cfg.train.lr_student_final = 0.0;
  cfg.train.lr_teacher_initial = cfg.train.lr_teacher_final = 0.0;
  const auto table = run_ablation(cfg, 1);
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_EQ(table.rows[0].name, "baseline");
  EXPECT_FALSE(table.rows[0].bidirectional);
  EXPECT_FALSE(table.rows[0].one_to_many);
  EXPECT_TRUE(table.rows[1].bidirectional);
  EXPECT_FALSE(table.rows[1].one_to_many);
  EXPECT_TRUE(table.rows[2].bidirectional);
  EXPECT_TRUE(table.rows[2].one_to_many);
  EXPECT_EQ(table.rows[0].map_all, table.rows[1].map_all);
  EXPECT_EQ(table.rows[0].prec_at_k, table.rows[1].prec_at_k);
  EXPECT_THROW(run_ablation(cfg, 0), ConfigError);
}
