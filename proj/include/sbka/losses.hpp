#pragma once

// Training objectives: hard-label classification, inter-modality alignment against a fixed
// reference distribution, soft labels, and the knowledge-alignment cross-entropy used in both
// directions between student and teacher.
//
// Every loss is a sum over the batch. Gradients are returned per sample, with respect to the
// vector the loss consumes (logits or embeddings).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sbka/dataset.hpp"
#include "sbka/encoder.hpp"
#include "sbka/numerics.hpp"

namespace sbka {

struct LossValue {
  double value = 0.0;
  std::vector<Vector> grads;
};

/// -sum_i log softmax(f_i)[y_i]; gradient softmax(f_i) - onehot(y_i).
inline LossValue classification_loss(std::span<const Vector> logits, std::span<const std::uint32_t> labels) {
  if (logits.empty()) throw DataError("classification_loss on an empty batch");
  detail::require_same_dim(logits.size(), labels.size(), "classification_loss batch");
  LossValue out;
  out.grads.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& f = logits[i];
    if (labels[i] >= f.size()) {
      throw LabelError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(f.size()) + ")");
    }
    const Vector lp = log_softmax(f);
    out.value -= lp[labels[i]];
    Vector g = softmax(f);
    g[labels[i]] -= 1.0;
    out.grads.push_back(std::move(g));
  }
  return out;
}

/// Fixed target distribution for modality alignment: softmax of a seeded standard-normal draw.
struct ReferenceDistribution {
  Distribution r;
  friend bool operator==(const ReferenceDistribution&, const ReferenceDistribution&) = default;
};

inline ReferenceDistribution build_reference(Seed seed, std::size_t dim) {
  return {softmax(seeded_gaussian_vector(seed, dim))};
}

struct AlignmentLoss {
  double value = 0.0;
  std::vector<Vector> sketch_grads;
  std::vector<Vector> photo_grads;
};

namespace detail {

// KL(softmax(e) || r) and its gradient with respect to e.
inline double kl_softmax_to_ref(std::span<const double> e, std::span<const double> r, Vector* grad) {
  require_same_dim(e.size(), r.size(), "embedding vs reference");
  const Vector lp = log_softmax(e);
  Vector c(e.size());
  double value = 0.0;
  double mean_c = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double p = std::exp(lp[k]);
    c[k] = lp[k] - std::log(std::max(r[k], kKlFloor));
    value += p * c[k];
    mean_c += p * c[k];
  }
  if (grad != nullptr) {
    grad->resize(e.size());
    for (std::size_t k = 0; k < e.size(); ++k) (*grad)[k] = std::exp(lp[k]) * (c[k] - mean_c);
  }
  return value;
}

}  // namespace detail

/// sum over sketches and photos of KL(softmax(e) || r).
inline AlignmentLoss modality_alignment_loss(std::span<const Vector> sketch_embs, std::span<const Vector> photo_embs,
                                             const ReferenceDistribution& ref) {
  if (sketch_embs.empty() || photo_embs.empty()) {
    throw DataError("modality_alignment_loss needs at least one sketch and one photo");
  }
  AlignmentLoss out;
  auto run = [&](std::span<const Vector> embs, std::vector<Vector>& grads) {
    grads.resize(embs.size());
    for (std::size_t i = 0; i < embs.size(); ++i) out.value += detail::kl_softmax_to_ref(embs[i], ref.r, &grads[i]);
  };
  run(sketch_embs, out.sketch_grads);
  run(photo_embs, out.photo_grads);
  return out;
}

/// softmax(f_src + lambda_sem * a)
inline Distribution soft_label(std::span<const double> f_src, std::span<const double> prior, double lambda_sem) {
  detail::require_same_dim(f_src.size(), prior.size(), "soft_label");
  Vector z(f_src.begin(), f_src.end());
  for (std::size_t k = 0; k < z.size(); ++k) z[k] += lambda_sem * prior[k];
  return softmax(z);
}

/// -sum_i sum_k g_ik log softmax(z_i)[k]; gradient softmax(z_i) - g_i. Soft labels are constants.
inline LossValue knowledge_alignment_loss(std::span<const Distribution> soft_labels, std::span<const Vector> own_logits) {
  detail::require_same_dim(soft_labels.size(), own_logits.size(), "knowledge_alignment_loss batch");
  LossValue out;
  out.grads.reserve(own_logits.size());
  for (std::size_t i = 0; i < own_logits.size(); ++i) {
    detail::require_same_dim(soft_labels[i].size(), own_logits[i].size(), "knowledge_alignment_loss");
    const Vector lp = log_softmax(own_logits[i]);
    Vector g = softmax(own_logits[i]);
    for (std::size_t k = 0; k < lp.size(); ++k) {
      out.value -= soft_labels[i][k] * lp[k];
      g[k] -= soft_labels[i][k];
    }
    out.grads.push_back(std::move(g));
  }
  return out;
}

struct LossBreakdown {
  double l_cls = 0.0;
  double l_ma = 0.0;
  double l_ka = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    l_cls += o.l_cls;
    l_ma += o.l_ma;
    l_ka += o.l_ka;
    total += o.total;
    return *this;
  }
  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

/// Per-sample upstream gradients for one model, ready for backward_accumulate.
struct UpstreamGrads {
  std::vector<Vector> d_emb;
  std::vector<Vector> d_task;
  std::vector<Vector> d_src;
};

struct ObjectiveResult {
  LossBreakdown loss;
  UpstreamGrads upstream;
};

inline void require_finite_term(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss term ") + term);
}

/// Student objective L_cls + L_ka + lambda_ma * L_ma over one batch. `caches` are the student's
/// forward results for `batch`, `teacher_soft_labels` the constant targets for the source head.
inline ObjectiveResult student_objective(std::span<const ForwardCache> caches,
                                         std::span<const Distribution> teacher_soft_labels, const Batch& batch,
                                         const ReferenceDistribution& ref, double lambda_ma) {
  const std::size_t n = batch.size();
  detail::require_same_dim(caches.size(), n, "student caches vs batch");
  detail::require_same_dim(teacher_soft_labels.size(), n, "soft labels vs batch");

  std::vector<Vector> task_logits, src_logits, sketch_embs, photo_embs;
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> sketch_idx, photo_idx;
  for (std::size_t i = 0; i < n; ++i) {
    task_logits.push_back(caches[i].task_logits);
    src_logits.push_back(caches[i].src_logits);
    labels.push_back(batch[i].label);
    if (batch[i].modality == Modality::sketch) {
      sketch_idx.push_back(i);
      sketch_embs.push_back(caches[i].emb);
    } else {
      photo_idx.push_back(i);
      photo_embs.push_back(caches[i].emb);
    }
  }

  const LossValue cls = classification_loss(task_logits, labels);
  const LossValue ka = knowledge_alignment_loss(teacher_soft_labels, src_logits);

  ObjectiveResult out;
  out.loss.l_cls = cls.value;
  out.loss.l_ka = ka.value;
  out.upstream.d_task = cls.grads;
  out.upstream.d_src = ka.grads;
  out.upstream.d_emb.assign(n, Vector(caches.empty() ? 0 : caches[0].emb.size(), 0.0));

  if (lambda_ma != 0.0) {
    const AlignmentLoss ma = modality_alignment_loss(sketch_embs, photo_embs, ref);
    out.loss.l_ma = ma.value;
    for (std::size_t s = 0; s < sketch_idx.size(); ++s) {
      for (std::size_t k = 0; k < ma.sketch_grads[s].size(); ++k) {
        out.upstream.d_emb[sketch_idx[s]][k] = lambda_ma * ma.sketch_grads[s][k];
      }
    }
    for (std::size_t s = 0; s < photo_idx.size(); ++s) {
      for (std::size_t k = 0; k < ma.photo_grads[s].size(); ++k) {
        out.upstream.d_emb[photo_idx[s]][k] = lambda_ma * ma.photo_grads[s][k];
      }
    }
  } else if (!sketch_embs.empty() && !photo_embs.empty()) {
    out.loss.l_ma = modality_alignment_loss(sketch_embs, photo_embs, ref).value;
  }
  out.loss.total = out.loss.l_cls + out.loss.l_ka + lambda_ma * out.loss.l_ma;
  require_finite_term(out.loss.l_cls, "l_cls");
  require_finite_term(out.loss.l_ka, "l_ka_S");
  require_finite_term(out.loss.l_ma, "l_ma");
  return out;
}

/// Teacher objective L_ka^T: the student's soft labels are the constant targets.
inline ObjectiveResult teacher_objective(std::span<const ForwardCache> caches,
                                         std::span<const Distribution> student_soft_labels) {
  std::vector<Vector> src_logits;
  for (const auto& c : caches) src_logits.push_back(c.src_logits);
  const LossValue ka = knowledge_alignment_loss(student_soft_labels, src_logits);
  ObjectiveResult out;
  out.loss.l_ka = ka.value;
  out.loss.total = ka.value;
  require_finite_term(ka.value, "l_ka_T");
  out.upstream.d_src = ka.grads;
  for (const auto& c : caches) {
    out.upstream.d_emb.emplace_back(c.emb.size(), 0.0);
    out.upstream.d_task.emplace_back(c.task_logits.size(), 0.0);
  }
  return out;
}

/// Sums parameter gradients over the batch in sample order.
inline ModelGrads accumulate_gradients(const ModelParams& params, std::span<const ForwardCache> caches,
                                       const UpstreamGrads& up) {
  ModelGrads g(params.dims());
  for (std::size_t i = 0; i < caches.size(); ++i) {
    backward_accumulate(params, caches[i], up.d_emb[i], up.d_task[i], up.d_src[i], g);
  }
  return g;
}

inline std::vector<ForwardCache> forward_batch(const ModelParams& params, const Batch& batch) {
  std::vector<ForwardCache> caches;
  caches.reserve(batch.size());
  for (const auto& s : batch) caches.push_back(forward(params, s.x));
  return caches;
}

/// Soft labels from a model's source head on a batch, with each sample's class prior row.
inline std::vector<Distribution> soft_labels_for(std::span<const ForwardCache> caches, const Batch& batch,
                                                 const SemanticPrior& prior, double lambda_sem) {
  std::vector<Distribution> out;
  out.reserve(caches.size());
  for (std::size_t i = 0; i < caches.size(); ++i) {
    out.push_back(soft_label(caches[i].src_logits, prior.row(batch[i].label), lambda_sem));
  }
  return out;
}

}  // namespace sbka
