#pragma once

// Two-layer MLP encoder with a task classifier head and a source-label head,
// explicit reverse-mode gradients, and an Adam optimizer.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sbka/numerics.hpp"

namespace sbka {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct ModelDims {
  std::size_t d_in = 0;
  std::size_t hidden = 0;
  std::size_t d_emb = 0;
  std::size_t k_train = 0;
  std::size_t k_src = 0;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Encoder weights plus the two linear heads. Gradients share this layout.
struct ModelParams {
  Matrix w1;      // d_in x hidden
  Vector b1;      // hidden
  Matrix w2;      // hidden x d_emb
  Vector b2;      // d_emb
  Matrix w_task;  // d_emb x k_train
  Vector b_task;  // k_train
  Matrix w_src;   // d_emb x k_src
  Vector b_src;   // k_src

  ModelParams() = default;
  explicit ModelParams(const ModelDims& d)
      : w1(d.d_in, d.hidden),
        b1(d.hidden, 0.0),
        w2(d.hidden, d.d_emb),
        b2(d.d_emb, 0.0),
        w_task(d.d_emb, d.k_train),
        b_task(d.k_train, 0.0),
        w_src(d.d_emb, d.k_src),
        b_src(d.k_src, 0.0) {}

  ModelDims dims() const { return {w1.rows, w1.cols, w2.cols, w_task.cols, w_src.cols}; }

  /// Every tensor in declaration order.
  std::array<std::span<double>, 8> tensors() {
    return {std::span<double>(w1.data), std::span<double>(b1),     std::span<double>(w2.data),
            std::span<double>(b2),      std::span<double>(w_task.data), std::span<double>(b_task),
            std::span<double>(w_src.data), std::span<double>(b_src)};
  }
  std::array<std::span<const double>, 8> tensors() const {
    return {std::span<const double>(w1.data), std::span<const double>(b1),
            std::span<const double>(w2.data), std::span<const double>(b2),
            std::span<const double>(w_task.data), std::span<const double>(b_task),
            std::span<const double>(w_src.data), std::span<const double>(b_src)};
  }

  static constexpr std::array<const char*, 8> kTensorNames = {"W1", "b1", "W2", "b2",
                                                             "W_task", "b_task", "W_src", "b_src"};

  std::size_t size() const {
    std::size_t n = 0;
    for (auto t : tensors()) n += t.size();
    return n;
  }

  Vector flatten() const {
    Vector out;
    out.reserve(size());
    for (auto t : tensors()) out.insert(out.end(), t.begin(), t.end());
    return out;
  }

  void assign_flat(std::span<const double> flat) {
    if (flat.size() != size()) throw DimensionError("flat parameter vector has wrong length");
    std::size_t off = 0;
    for (auto t : tensors()) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), t.size(), t.begin());
      off += t.size();
    }
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using ModelGrads = ModelParams;

inline void validate_dims(const ModelDims& d) {
  if (d.d_in == 0 || d.hidden == 0 || d.d_emb == 0 || d.k_train == 0 || d.k_src == 0) {
    throw DimensionError("model dimensions must all be at least 1");
  }
}

/// He-scaled normal weights N(0, 2 / fan_in), zero biases.
inline ModelParams init_params(const ModelDims& d, Seed seed) {
  validate_dims(d);
  ModelParams p(d);
  CounterRng rng(seed);
  auto fill = [&rng](Matrix& m) {
    const double sd = std::sqrt(2.0 / static_cast<double>(m.rows));
    for (double& w : m.data) w = sd * rng.normal();
  };
  fill(p.w1);
  fill(p.w2);
  fill(p.w_task);
  fill(p.w_src);
  return p;
}

struct ForwardCache {
  Vector input;
  Vector pre1;   // W1^T x + b1
  Vector act1;   // ReLU(pre1)
  Vector emb;    // e
  Vector task_logits;
  Vector src_logits;

  friend bool operator==(const ForwardCache&, const ForwardCache&) = default;
};

namespace detail {

// y = W^T x + b for W of shape (x.size() x b.size()).
inline Vector affine_t(const Matrix& w, std::span<const double> x, std::span<const double> b) {
  Vector y(b.begin(), b.end());
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = &w.data[i * w.cols];
    for (std::size_t j = 0; j < w.cols; ++j) y[j] += row[j] * xi;
  }
  return y;
}

// dW += x dy^T, db += dy, returns dx = W dy.
inline Vector affine_t_backward(const Matrix& w, std::span<const double> x, std::span<const double> dy,
                                Matrix& dw, Vector& db) {
  Vector dx(w.rows, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* row = &w.data[i * w.cols];
    double* drow = &dw.data[i * w.cols];
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) {
      drow[j] += x[i] * dy[j];
      acc += row[j] * dy[j];
    }
    dx[i] = acc;
  }
  for (std::size_t j = 0; j < db.size(); ++j) db[j] += dy[j];
  return dx;
}

}  // namespace detail

inline ForwardCache forward(const ModelParams& p, std::span<const double> x) {
  detail::require_same_dim(x.size(), p.w1.rows, "encoder input");
  ForwardCache c;
  c.input.assign(x.begin(), x.end());
  c.pre1 = detail::affine_t(p.w1, x, p.b1);
  c.act1.resize(c.pre1.size());
  for (std::size_t j = 0; j < c.pre1.size(); ++j) c.act1[j] = c.pre1[j] > 0.0 ? c.pre1[j] : 0.0;
  c.emb = detail::affine_t(p.w2, c.act1, p.b2);
  c.task_logits = detail::affine_t(p.w_task, c.emb, p.b_task);
  c.src_logits = detail::affine_t(p.w_src, c.emb, p.b_src);
  return c;
}

/// Accumulates the parameter gradients for one sample into `grads`.
/// `d_emb` is the direct upstream gradient on the embedding; the head gradients add to it.
inline void backward_accumulate(const ModelParams& p, const ForwardCache& c, std::span<const double> d_emb,
                                std::span<const double> d_task, std::span<const double> d_src,
                                ModelGrads& grads) {
  detail::require_same_dim(d_emb.size(), p.w2.cols, "d_emb");
  detail::require_same_dim(d_task.size(), p.w_task.cols, "d_task_logits");
  detail::require_same_dim(d_src.size(), p.w_src.cols, "d_src_logits");
  Vector de(d_emb.begin(), d_emb.end());
  const Vector de_task = detail::affine_t_backward(p.w_task, c.emb, d_task, grads.w_task, grads.b_task);
  const Vector de_src = detail::affine_t_backward(p.w_src, c.emb, d_src, grads.w_src, grads.b_src);
  for (std::size_t k = 0; k < de.size(); ++k) de[k] += de_task[k] + de_src[k];
  Vector dact = detail::affine_t_backward(p.w2, c.act1, de, grads.w2, grads.b2);
  // ReLU subgradient at 0 is 0.
  for (std::size_t j = 0; j < dact.size(); ++j) {
    if (!(c.pre1[j] > 0.0)) dact[j] = 0.0;
  }
  detail::affine_t_backward(p.w1, c.input, dact, grads.w1, grads.b1);
}

inline ModelGrads backward(const ModelParams& p, const ForwardCache& c, std::span<const double> d_emb,
                           std::span<const double> d_task, std::span<const double> d_src) {
  ModelGrads g(p.dims());
  backward_accumulate(p, c, d_emb, d_task, d_src, g);
  return g;
}

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  ModelParams m;
  ModelParams v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(const ModelDims& d) : m(d), v(d) {}

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update. A non-finite gradient refuses the step and leaves both
/// arguments untouched.
inline void adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw NumericError("learning rate must be finite and non-negative");
  if (params.dims() != grads.dims() || params.dims() != state.m.dims()) {
    throw DimensionError("adam_step shape mismatch");
  }
  const auto gs = grads.tensors();
  for (std::size_t t = 0; t < gs.size(); ++t) {
    for (double g : gs[t]) {
      if (!std::isfinite(g)) throw NumericError(std::string("non-finite gradient in ") + ModelParams::kTensorNames[t]);
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.step));
  auto ps = params.tensors();
  auto ms = state.m.tensors();
  auto vs = state.v.tensors();
  for (std::size_t t = 0; t < ps.size(); ++t) {
    for (std::size_t i = 0; i < ps[t].size(); ++i) {
      const double g = gs[t][i];
      ms[t][i] = AdamState::kBeta1 * ms[t][i] + (1.0 - AdamState::kBeta1) * g;
      vs[t][i] = AdamState::kBeta2 * vs[t][i] + (1.0 - AdamState::kBeta2) * g * g;
      const double mhat = ms[t][i] / bc1;
      const double vhat = vs[t][i] / bc2;
      ps[t][i] -= lr * mhat / (std::sqrt(vhat) + AdamState::kEps);
    }
  }
}

/// Cosine decay from `initial` at epoch 0 to `final_lr` at the last epoch.
inline double cosine_lr(double initial, double final_lr, std::size_t epoch, std::size_t total_epochs) {
  if (total_epochs <= 1) return initial;
  const double progress = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  return final_lr + 0.5 * (initial - final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace sbka
