#pragma once

// Finite-difference audit of every analytic gradient used in training, on small random
// instances: the encoder backward pass, each loss term, the teacher-side soft-label chain and the
// full student objective.

#include <string>
#include <vector>

#include "sbka/dataset.hpp"
#include "sbka/encoder.hpp"
#include "sbka/losses.hpp"
#include "sbka/numerics.hpp"

namespace sbka {

inline constexpr double kGradTolerance = 1e-4;

struct GradcheckComponent {
  std::string name;
  double worst_relative_error = 0.0;
  std::size_t instances = 0;
  bool passed() const { return worst_relative_error < kGradTolerance; }
};

struct GradcheckReport {
  std::vector<GradcheckComponent> components;
  bool passed() const {
    for (const auto& c : components) {
      if (!c.passed()) return false;
    }
    return true;
  }
};

namespace detail {

inline constexpr ModelDims kGradcheckDims{6, 5, 4, 3, 7};

inline Vector random_vector(CounterRng& rng, std::size_t n, double scale = 1.0) {
  Vector v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline ModelParams random_params(CounterRng& rng, const ModelDims& d) {
  ModelParams p(d);
  for (auto t : p.tensors()) {
    for (double& x : t) x = 0.7 * rng.normal();
  }
  return p;
}

// 3 sketches then 2 photos with labels below k_train.
inline Batch random_batch(CounterRng& rng, const ModelDims& d) {
  Batch b;
  for (std::size_t i = 0; i < 5; ++i) {
    LabeledSample s;
    s.x = random_vector(rng, d.d_in);
    s.label = static_cast<std::uint32_t>(rng.index(d.k_train));
    s.modality = i < 3 ? Modality::sketch : Modality::photo;
    b.push_back(std::move(s));
  }
  return b;
}

inline std::vector<Vector> random_vectors(CounterRng& rng, std::size_t n, std::size_t dim, double scale) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_vector(rng, dim, scale));
  return out;
}

inline Vector concat(const std::vector<Vector>& vs) {
  Vector out;
  for (const auto& v : vs) out.insert(out.end(), v.begin(), v.end());
  return out;
}

inline std::vector<Vector> split(std::span<const double> flat, std::size_t n, std::size_t dim) {
  std::vector<Vector> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].assign(flat.begin() + i * dim, flat.begin() + (i + 1) * dim);
  return out;
}

inline double check_encoder(CounterRng& rng) {
  const ModelDims d = kGradcheckDims;
  const ModelParams p = random_params(rng, d);
  const Vector x = random_vector(rng, d.d_in);
  const Vector de = random_vector(rng, d.d_emb), dt = random_vector(rng, d.k_train), ds = random_vector(rng, d.k_src);
  auto dot = [](const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  auto scalar = [&](std::span<const double> flat) {
    ModelParams q = p;
    q.assign_flat(flat);
    const auto c = forward(q, x);
    return dot(de, c.emb) + dot(dt, c.task_logits) + dot(ds, c.src_logits);
  };
  const Vector analytic = backward(p, forward(p, x), de, dt, ds).flatten();
  return max_relative_error(analytic, finite_diff_grad(scalar, p.flatten()));
}

inline double check_classification(CounterRng& rng) {
  const std::size_t n = 4, k = 5;
  const auto logits = random_vectors(rng, n, k, 2.0);
  std::vector<std::uint32_t> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<std::uint32_t>(rng.index(k)));
  auto f = [&](std::span<const double> flat) { return classification_loss(split(flat, n, k), labels).value; };
  return max_relative_error(concat(classification_loss(logits, labels).grads), finite_diff_grad(f, concat(logits)));
}

inline double check_alignment(CounterRng& rng) {
  const std::size_t dim = 5;
  const auto sketches = random_vectors(rng, 3, dim, 1.5);
  const auto photos = random_vectors(rng, 2, dim, 1.5);
  const ReferenceDistribution ref = build_reference(Seed{rng.next_u64()}, dim);
  auto f = [&](std::span<const double> flat) {
    const auto all = split(flat, 5, dim);
    return modality_alignment_loss(std::vector<Vector>(all.begin(), all.begin() + 3),
                                   std::vector<Vector>(all.begin() + 3, all.end()), ref)
        .value;
  };
  const AlignmentLoss a = modality_alignment_loss(sketches, photos, ref);
  std::vector<Vector> grads = a.sketch_grads;
  grads.insert(grads.end(), a.photo_grads.begin(), a.photo_grads.end());
  std::vector<Vector> all = sketches;
  all.insert(all.end(), photos.begin(), photos.end());
  return max_relative_error(concat(grads), finite_diff_grad(f, concat(all)));
}

inline double check_knowledge_alignment(CounterRng& rng) {
  const std::size_t n = 4, k = 6;
  std::vector<Distribution> g;
  for (std::size_t i = 0; i < n; ++i) g.push_back(softmax(random_vector(rng, k, 2.0)));
  const auto logits = random_vectors(rng, n, k, 2.0);
  auto f = [&](std::span<const double> flat) { return knowledge_alignment_loss(g, split(flat, n, k)).value; };
  return max_relative_error(concat(knowledge_alignment_loss(g, logits).grads), finite_diff_grad(f, concat(logits)));
}

// Teacher loss through the teacher's parameters, with the student's soft labels (prior included)
// held constant.
inline double check_soft_label_chain(CounterRng& rng) {
  const ModelDims d = kGradcheckDims;
  const ModelParams student = random_params(rng, d);
  const ModelParams teacher = random_params(rng, d);
  const Batch batch = random_batch(rng, d);
  SemanticPrior prior{Matrix(d.k_train, d.k_src)};
  for (double& v : prior.table.data) v = rng.normal();
  const double lambda_sem = 0.5;
  const auto g_student = soft_labels_for(forward_batch(student, batch), batch, prior, lambda_sem);
  auto f = [&](std::span<const double> flat) {
    ModelParams t = teacher;
    t.assign_flat(flat);
    return teacher_objective(forward_batch(t, batch), g_student).loss.total;
  };
  const auto caches = forward_batch(teacher, batch);
  const ObjectiveResult obj = teacher_objective(caches, g_student);
  const Vector analytic = accumulate_gradients(teacher, caches, obj.upstream).flatten();
  return max_relative_error(analytic, finite_diff_grad(f, teacher.flatten()));
}

inline double check_composite(CounterRng& rng) {
  const ModelDims d = kGradcheckDims;
  const ModelParams student = random_params(rng, d);
  const ModelParams teacher = random_params(rng, d);
  const Batch batch = random_batch(rng, d);
  SemanticPrior prior{Matrix(d.k_train, d.k_src)};
  for (double& v : prior.table.data) v = rng.normal();
  const ReferenceDistribution ref = build_reference(Seed{rng.next_u64()}, d.d_emb);
  const double lambda_ma = 0.7, lambda_sem = 0.5;
  const auto g_teacher = soft_labels_for(forward_batch(teacher, batch), batch, prior, lambda_sem);
  auto f = [&](std::span<const double> flat) {
    ModelParams s = student;
    s.assign_flat(flat);
    return student_objective(forward_batch(s, batch), g_teacher, batch, ref, lambda_ma).loss.total;
  };
  const auto caches = forward_batch(student, batch);
  const ObjectiveResult obj = student_objective(caches, g_teacher, batch, ref, lambda_ma);
  const Vector analytic = accumulate_gradients(student, caches, obj.upstream).flatten();
  return max_relative_error(analytic, finite_diff_grad(f, student.flatten()));
}

}  // namespace detail

/// Runs `instances` random cases per component. Component names: encoder, l_cls, l_ma,
/// soft_label_chain, l_ka, composite.
inline GradcheckReport run_gradcheck(Seed seed, std::size_t instances) {
  using Check = double (*)(CounterRng&);
  const std::pair<const char*, Check> checks[] = {
      {"encoder", detail::check_encoder},
      {"l_cls", detail::check_classification},
      {"l_ma", detail::check_alignment},
      {"soft_label_chain", detail::check_soft_label_chain},
      {"l_ka", detail::check_knowledge_alignment},
      {"composite", detail::check_composite},
  };
  GradcheckReport report;
  for (const auto& [name, check] : checks) {
    CounterRng rng(derive_seed(seed, name));
    GradcheckComponent c{name, 0.0, instances};
    for (std::size_t i = 0; i < instances; ++i) c.worst_relative_error = std::max(c.worst_relative_error, check(rng));
    report.components.push_back(c);
  }
  return report;
}

}  // namespace sbka
