#pragma once

// Teacher pretraining and the alternating student/teacher training loop.

#include <cstdint>
#include <string>
#include <vector>

#include "sbka/dataset.hpp"
#include "sbka/encoder.hpp"
#include "sbka/losses.hpp"

namespace sbka {

struct TrainConfig {
  double lambda_ma = 0.1;
  double lambda_sem = 0.1;
  double lr_student_initial = 1e-4;
  double lr_student_final = 1e-7;
  double lr_teacher_initial = 1e-4;
  double lr_teacher_final = 1e-7;
  std::size_t warmup_epochs = 10;  // t: epochs [0, t) keep the teacher frozen
  std::size_t total_epochs = 20;
  std::size_t batch_size = 32;

  std::size_t pretrain_epochs = 30;
  double pretrain_lr = 1e-2;

  Seed shuffle_seed{11};
  Seed reference_seed{12};

  void validate() const {
    if (warmup_epochs > total_epochs) throw ConfigError("warmup_epochs must not exceed total_epochs");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    for (double lr : {lr_student_initial, lr_student_final, lr_teacher_initial, lr_teacher_final, pretrain_lr}) {
      if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rates must be finite and non-negative");
    }
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown student;
  double l_ka_teacher = 0.0;
  double lr_student = 0.0;
  double lr_teacher = 0.0;
  bool teacher_frozen = true;
  std::size_t samples = 0;  // not serialized

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

/// Stratified batches: each batch takes batch_size/2 sketches and batch_size - batch_size/2
/// photos from independently shuffled pools. Pools wrap around, so every batch is full and holds
/// both modalities.
inline std::vector<Batch> make_stratified_batches(const std::vector<LabeledSample>& samples, std::size_t batch_size,
                                                  CounterRng& rng) {
  std::vector<std::size_t> sketches, photos;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].modality == Modality::sketch ? sketches : photos).push_back(i);
  }
  if (sketches.empty() || photos.empty()) throw DataError("training data needs both sketch and photo samples");
  rng.shuffle(sketches);
  rng.shuffle(photos);
  const std::size_t per_sketch = batch_size / 2;
  const std::size_t per_photo = batch_size - per_sketch;
  const std::size_t n_batches = std::max((sketches.size() + per_sketch - 1) / per_sketch,
                                         (photos.size() + per_photo - 1) / per_photo);
  std::vector<Batch> batches(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    batches[b].reserve(batch_size);
    for (std::size_t k = 0; k < per_sketch; ++k) {
      batches[b].push_back(samples[sketches[(b * per_sketch + k) % sketches.size()]]);
    }
    for (std::size_t k = 0; k < per_photo; ++k) {
      batches[b].push_back(samples[photos[(b * per_photo + k) % photos.size()]]);
    }
  }
  return batches;
}

/// Trains the teacher's encoder and source head with cross-entropy on source labels of seen-class
/// photos. Zero pretraining epochs return `teacher` unchanged.
inline ModelParams pretrain_teacher(ModelParams teacher, const Dataset& data, const TrainConfig& cfg, Seed seed) {
  std::vector<LabeledSample> photos;
  for (const auto& s : data.samples) {
    if (s.modality == Modality::photo && data.is_seen(s.label)) photos.push_back(s);
  }
  if (photos.empty()) throw DataError("teacher pretraining needs seen-class photos");
  if (cfg.pretrain_epochs == 0) return teacher;

  const std::size_t k_src = teacher.dims().k_src;
  AdamState adam(teacher.dims());
  CounterRng rng(seed);
  std::vector<std::size_t> order(photos.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<ForwardCache> caches;
      std::vector<Vector> logits;
      std::vector<std::uint32_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        caches.push_back(forward(teacher, photos[order[i]].x));
        logits.push_back(caches.back().src_logits);
        labels.push_back(source_label(photos[order[i]].label, k_src));
      }
      const LossValue cls = classification_loss(logits, labels);
      require_finite_term(cls.value, "pretrain l_cls");
      ModelGrads g(teacher.dims());
      for (std::size_t i = 0; i < caches.size(); ++i) {
        const Vector zero_emb(caches[i].emb.size(), 0.0);
        const Vector zero_task(caches[i].task_logits.size(), 0.0);
        backward_accumulate(teacher, caches[i], zero_emb, zero_task, cls.grads[i], g);
      }
      adam_step(teacher, g, adam, cosine_lr(cfg.pretrain_lr, cfg.pretrain_lr * 1e-2, epoch, cfg.pretrain_epochs));
    }
  }
  return teacher;
}

/// Fraction of seen-class photos whose source head predicts their source label.
inline double source_head_accuracy(const ModelParams& model, const Dataset& data, Modality modality) {
  std::size_t hit = 0, total = 0;
  const std::size_t k_src = model.dims().k_src;
  for (const auto& s : data.samples) {
    if (s.modality != modality || !data.is_seen(s.label)) continue;
    const auto c = forward(model, s.x);
    const auto best = static_cast<std::size_t>(std::max_element(c.src_logits.begin(), c.src_logits.end()) -
                                                c.src_logits.begin());
    hit += best == source_label(s.label, k_src);
    ++total;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

struct TrainResult {
  ModelParams student;
  ModelParams teacher;
  TrainHistory history;
};

struct StepLosses {
  LossBreakdown student;
  double l_ka_teacher = 0.0;
};

/// One alternating step. Both objectives are evaluated from the parameters at the start of the
/// step; the student is then updated, followed by the teacher when `update_teacher` is set.
inline StepLosses sbka_step(ModelParams& student, ModelParams& teacher, AdamState& student_adam,
                            AdamState& teacher_adam, const Batch& batch, const SemanticPrior& prior,
                            const ReferenceDistribution& ref, const TrainConfig& cfg, double lr_student,
                            double lr_teacher, bool update_teacher) {
  const auto s_caches = forward_batch(student, batch);
  const auto t_caches = forward_batch(teacher, batch);
  const auto g_teacher = soft_labels_for(t_caches, batch, prior, cfg.lambda_sem);
  const auto g_student = soft_labels_for(s_caches, batch, prior, cfg.lambda_sem);

  const ObjectiveResult s_obj = student_objective(s_caches, g_teacher, batch, ref, cfg.lambda_ma);
  const ObjectiveResult t_obj = teacher_objective(t_caches, g_student);

  const ModelGrads s_grads = accumulate_gradients(student, s_caches, s_obj.upstream);
  adam_step(student, s_grads, student_adam, lr_student);
  if (update_teacher) {
    adam_step(teacher, accumulate_gradients(teacher, t_caches, t_obj.upstream), teacher_adam, lr_teacher);
  }
  return {s_obj.loss, t_obj.loss.l_ka};
}

/// Alternating training on the seen classes. Epochs [0, warmup_epochs) update only the student;
/// later epochs also update the teacher on the student's soft labels.
inline TrainResult train_sbka(ModelParams student, ModelParams teacher, const Dataset& data,
                              const SemanticPrior& prior, const TrainConfig& cfg) {
  cfg.validate();
  const ModelDims sd = student.dims();
  const ModelDims td = teacher.dims();
  if (sd.d_in != td.d_in || sd.k_src != td.k_src) throw DimensionError("student and teacher are incompatible");
  if (prior.table.rows != sd.k_train || prior.table.cols != sd.k_src) {
    throw DimensionError("semantic prior must be k_train x k_src");
  }
  const auto seen = data.select(true);
  for (const auto& s : seen) {
    if (s.x.size() != sd.d_in) throw DimensionError("sample dimension does not match model input");
    if (s.label >= sd.k_train) throw LabelError("seen label " + std::to_string(s.label) + " >= k_train");
  }

  const ReferenceDistribution ref = build_reference(cfg.reference_seed, sd.d_emb);
  AdamState student_adam(sd);
  AdamState teacher_adam(td);
  CounterRng rng(cfg.shuffle_seed);
  TrainResult out;
  for (std::size_t epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.teacher_frozen = epoch < cfg.warmup_epochs;
    rec.lr_student = cosine_lr(cfg.lr_student_initial, cfg.lr_student_final, epoch, cfg.total_epochs);
    rec.lr_teacher = cosine_lr(cfg.lr_teacher_initial, cfg.lr_teacher_final, epoch, cfg.total_epochs);
    for (const Batch& batch : make_stratified_batches(seen, cfg.batch_size, rng)) {
      const StepLosses l = sbka_step(student, teacher, student_adam, teacher_adam, batch, prior, ref, cfg,
                                     rec.lr_student, rec.lr_teacher, !rec.teacher_frozen);
      rec.student += l.student;
      rec.l_ka_teacher += l.l_ka_teacher;
      rec.samples += batch.size();
    }
    out.history.epochs.push_back(rec);
  }
  out.student = std::move(student);
  out.teacher = std::move(teacher);
  return out;
}

}  // namespace sbka
