#pragma once

// Minimal reverse-mode differentiation engine. Operations execute eagerly on
// dense double tensors and, when a Tape is supplied, push one backward
// closure each; Tape::backward replays the closures in reverse order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "pcgnet/common.hpp"

namespace pcgnet::ad {

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, bool requires_grad_ = false)
      : shape(std::move(shape_)), requires_grad(requires_grad_) {
    data.assign(static_cast<std::size_t>(element_count(shape)), 0.0);
  }
  Tensor(std::vector<int> shape_, std::vector<double> values, bool requires_grad_ = false)
      : shape(std::move(shape_)), data(std::move(values)), requires_grad(requires_grad_) {
    if (static_cast<std::int64_t>(data.size()) != element_count(shape))
      throw ShapeMismatch("tensor data length does not match shape");
  }

  static std::int64_t element_count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeMismatch("tensor dimensions must be positive");
      n *= d;
    }
    return n;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // materialized on first accumulation
  bool requires_grad = false;
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false) {
  return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

inline TensorPtr make_tensor(std::vector<int> shape, std::vector<double> values,
                             bool requires_grad = false) {
  return std::make_shared<Tensor>(std::move(shape), std::move(values), requires_grad);
}

// Records backward closures in execution order. Inputs of every recorded
// operation were produced earlier, so reverse replay is a valid topological
// visit of the graph.
class Tape {
 public:
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  // Seeds d(root)/d(root) = 1 and propagates. The root must be scalar.
  void backward(const TensorPtr& root) {
    if (root->size() != 1) throw ShapeMismatch("backward root must be a scalar tensor");
    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

  void clear() { steps_.clear(); }
  std::size_t size() const { return steps_.size(); }

 private:
  std::vector<std::function<void()>> steps_;
};

enum class Mode { TRAIN, EVAL };

namespace detail {

inline void require(bool cond, const char* msg) {
  if (!cond) throw ShapeMismatch(msg);
}

inline bool wants_grad(const Tape* tape, std::initializer_list<const TensorPtr*> inputs) {
  if (!tape) return false;
  for (const TensorPtr* t : inputs)
    if (*t && (*t)->requires_grad) return true;
  return false;
}

}  // namespace detail

// --- convolution -------------------------------------------------------------

// SAME cross-correlation: x[B,Cin,L] * w[Cout,Cin,K] (+bias[Cout]) -> [B,Cout,L].
// Zero padding is symmetric; for even K the extra padded sample sits on the
// right, i.e. pad_left = (K-1)/2.
inline TensorPtr conv1d(Tape* tape, const TensorPtr& x, const TensorPtr& w,
                        const TensorPtr& bias = nullptr) {
  detail::require(x->shape.size() == 3, "conv1d input must be [B,C,L]");
  detail::require(w->shape.size() == 3, "conv1d weight must be [Cout,Cin,K]");
  const int B = x->shape[0], Cin = x->shape[1], L = x->shape[2];
  const int Cout = w->shape[0], K = w->shape[2];
  detail::require(w->shape[1] == Cin, "conv1d channel mismatch");
  if (bias) detail::require(bias->size() == Cout, "conv1d bias size mismatch");
  const int pad_left = (K - 1) / 2;

  bool track = detail::wants_grad(tape, {&x, &w, &bias});
  auto out = make_tensor({B, Cout, L}, track);

  const int padded = L + K - 1;
  std::vector<double> xpad(static_cast<std::size_t>(padded));
  for (int b = 0; b < B; ++b) {
    if (bias) {
      for (int co = 0; co < Cout; ++co) {
        double* yr = out->data.data() + (static_cast<std::size_t>(b) * Cout + co) * L;
        std::fill(yr, yr + L, bias->data[co]);
      }
    }
    for (int ci = 0; ci < Cin; ++ci) {
      std::fill(xpad.begin(), xpad.end(), 0.0);
      const double* xr = x->data.data() + (static_cast<std::size_t>(b) * Cin + ci) * L;
      std::copy(xr, xr + L, xpad.begin() + pad_left);
      for (int co = 0; co < Cout; ++co) {
        const double* wr = w->data.data() + (static_cast<std::size_t>(co) * Cin + ci) * K;
        double* yr = out->data.data() + (static_cast<std::size_t>(b) * Cout + co) * L;
        for (int k = 0; k < K; ++k) {
          const double wk = wr[k];
          const double* xs = xpad.data() + k;
          for (int t = 0; t < L; ++t) yr[t] += wk * xs[t];
        }
      }
    }
  }

  if (track) {
    tape->record([x, w, bias, out, B, Cin, L, Cout, K, pad_left]() {
      const int padded = L + K - 1;
      const bool dx = x->requires_grad, dw = w->requires_grad;
      const bool db = bias && bias->requires_grad;
      if (dx) x->ensure_grad();
      if (dw) w->ensure_grad();
      if (db) bias->ensure_grad();
      std::vector<double> xpad(static_cast<std::size_t>(padded));
      std::vector<double> gpad(static_cast<std::size_t>(padded));
      for (int b = 0; b < B; ++b) {
        for (int ci = 0; ci < Cin; ++ci) {
          if (dw) {
            std::fill(xpad.begin(), xpad.end(), 0.0);
            const double* xr = x->data.data() + (static_cast<std::size_t>(b) * Cin + ci) * L;
            std::copy(xr, xr + L, xpad.begin() + pad_left);
          }
          if (dx) std::fill(gpad.begin(), gpad.end(), 0.0);
          for (int co = 0; co < Cout; ++co) {
            const double* gr = out->grad.data() + (static_cast<std::size_t>(b) * Cout + co) * L;
            const double* wr = w->data.data() + (static_cast<std::size_t>(co) * Cin + ci) * K;
            double* dwr = dw ? w->grad.data() + (static_cast<std::size_t>(co) * Cin + ci) * K : nullptr;
            for (int k = 0; k < K; ++k) {
              if (dx) {
                const double wk = wr[k];
                double* gp = gpad.data() + k;
                for (int t = 0; t < L; ++t) gp[t] += wk * gr[t];
              }
              if (dw) {
                const double* xs = xpad.data() + k;
                double acc = 0.0;
                for (int t = 0; t < L; ++t) acc += gr[t] * xs[t];
                dwr[k] += acc;
              }
            }
          }
          if (dx) {
            double* xg = x->grad.data() + (static_cast<std::size_t>(b) * Cin + ci) * L;
            const double* gp = gpad.data() + pad_left;
            for (int t = 0; t < L; ++t) xg[t] += gp[t];
          }
        }
        if (db) {
          for (int co = 0; co < Cout; ++co) {
            const double* gr = out->grad.data() + (static_cast<std::size_t>(b) * Cout + co) * L;
            double acc = 0.0;
            for (int t = 0; t < L; ++t) acc += gr[t];
            bias->grad[co] += acc;
          }
        }
      }
    });
  }
  return out;
}

// --- pooling -----------------------------------------------------------------

// SAME max pooling with stride 1. Gradient routes to the first maximum of
// each window.
inline TensorPtr maxpool1d(Tape* tape, const TensorPtr& x, int window = 3) {
  detail::require(x->shape.size() == 3, "maxpool1d input must be [B,C,L]");
  detail::require(window >= 1, "maxpool1d window must be >= 1");
  const int B = x->shape[0], C = x->shape[1], L = x->shape[2];
  const int pad_left = (window - 1) / 2;

  bool track = detail::wants_grad(tape, {&x});
  auto out = make_tensor({B, C, L}, track);
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out->data.size());

  for (int bc = 0; bc < B * C; ++bc) {
    const double* xr = x->data.data() + static_cast<std::size_t>(bc) * L;
    double* yr = out->data.data() + static_cast<std::size_t>(bc) * L;
    std::int32_t* ar = argmax->data() + static_cast<std::size_t>(bc) * L;
    for (int t = 0; t < L; ++t) {
      int lo = std::max(0, t - pad_left);
      int hi = std::min(L - 1, t - pad_left + window - 1);
      int best = lo;
      double best_v = xr[lo];
      for (int s = lo + 1; s <= hi; ++s)
        if (xr[s] > best_v) {
          best_v = xr[s];
          best = s;
        }
      yr[t] = best_v;
      ar[t] = best;
    }
  }

  if (track) {
    tape->record([x, out, argmax, B, C, L]() {
      x->ensure_grad();
      for (int bc = 0; bc < B * C; ++bc) {
        const double* gr = out->grad.data() + static_cast<std::size_t>(bc) * L;
        const std::int32_t* ar = argmax->data() + static_cast<std::size_t>(bc) * L;
        double* xg = x->grad.data() + static_cast<std::size_t>(bc) * L;
        for (int t = 0; t < L; ++t) xg[ar[t]] += gr[t];
      }
    });
  }
  return out;
}

inline TensorPtr global_avg_pool(Tape* tape, const TensorPtr& x) {
  detail::require(x->shape.size() == 3, "global_avg_pool input must be [B,C,L]");
  const int B = x->shape[0], C = x->shape[1], L = x->shape[2];
  bool track = detail::wants_grad(tape, {&x});
  auto out = make_tensor({B, C}, track);
  for (int bc = 0; bc < B * C; ++bc) {
    const double* xr = x->data.data() + static_cast<std::size_t>(bc) * L;
    double acc = 0.0;
    for (int t = 0; t < L; ++t) acc += xr[t];
    out->data[bc] = acc / L;
  }
  if (track) {
    tape->record([x, out, B, C, L]() {
      x->ensure_grad();
      for (int bc = 0; bc < B * C; ++bc) {
        const double g = out->grad[bc] / L;
        double* xg = x->grad.data() + static_cast<std::size_t>(bc) * L;
        for (int t = 0; t < L; ++t) xg[t] += g;
      }
    });
  }
  return out;
}

// --- batch normalization -------------------------------------------------------

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.9;

// Per-channel normalization over batch and length. TRAIN uses batch
// statistics (population variance) and updates the running buffers in place;
// EVAL normalizes with the running buffers and never touches them.
inline TensorPtr batchnorm1d(Tape* tape, const TensorPtr& x, const TensorPtr& gamma,
                             const TensorPtr& beta, const TensorPtr& running_mean,
                             const TensorPtr& running_var, Mode mode) {
  detail::require(x->shape.size() == 3, "batchnorm1d input must be [B,C,L]");
  const int B = x->shape[0], C = x->shape[1], L = x->shape[2];
  detail::require(gamma->size() == C && beta->size() == C, "batchnorm1d affine size mismatch");
  detail::require(running_mean->size() == C && running_var->size() == C,
                  "batchnorm1d running stats size mismatch");

  bool track = detail::wants_grad(tape, {&x, &gamma, &beta});
  auto out = make_tensor({B, C, L}, track);
  const std::int64_t n_per_channel = static_cast<std::int64_t>(B) * L;

  auto mean = std::make_shared<std::vector<double>>(C, 0.0);
  auto inv_std = std::make_shared<std::vector<double>>(C, 0.0);

  if (mode == Mode::TRAIN) {
    for (int c = 0; c < C; ++c) {
      double m = 0.0;
      for (int b = 0; b < B; ++b) {
        const double* xr = x->data.data() + (static_cast<std::size_t>(b) * C + c) * L;
        for (int t = 0; t < L; ++t) m += xr[t];
      }
      m /= static_cast<double>(n_per_channel);
      double v = 0.0;
      for (int b = 0; b < B; ++b) {
        const double* xr = x->data.data() + (static_cast<std::size_t>(b) * C + c) * L;
        for (int t = 0; t < L; ++t) v += (xr[t] - m) * (xr[t] - m);
      }
      v /= static_cast<double>(n_per_channel);
      (*mean)[c] = m;
      (*inv_std)[c] = 1.0 / std::sqrt(v + kBatchNormEps);
      running_mean->data[c] = kBatchNormMomentum * running_mean->data[c] + (1.0 - kBatchNormMomentum) * m;
      running_var->data[c] = kBatchNormMomentum * running_var->data[c] + (1.0 - kBatchNormMomentum) * v;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      (*mean)[c] = running_mean->data[c];
      (*inv_std)[c] = 1.0 / std::sqrt(running_var->data[c] + kBatchNormEps);
    }
  }

  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double m = (*mean)[c], is = (*inv_std)[c];
      const double g = gamma->data[c], bb = beta->data[c];
      const double* xr = x->data.data() + (static_cast<std::size_t>(b) * C + c) * L;
      double* yr = out->data.data() + (static_cast<std::size_t>(b) * C + c) * L;
      for (int t = 0; t < L; ++t) yr[t] = g * (xr[t] - m) * is + bb;
    }

  if (track) {
    tape->record([x, gamma, beta, out, mean, inv_std, B, C, L, n_per_channel, mode]() {
      const bool dx = x->requires_grad;
      if (dx) x->ensure_grad();
      if (gamma->requires_grad) gamma->ensure_grad();
      if (beta->requires_grad) beta->ensure_grad();
      const double n = static_cast<double>(n_per_channel);
      for (int c = 0; c < C; ++c) {
        const double m = (*mean)[c], is = (*inv_std)[c], g = gamma->data[c];
        // reductions over the channel: sum g, sum g*xhat
        double sum_g = 0.0, sum_gx = 0.0;
        for (int b = 0; b < B; ++b) {
          const double* xr = x->data.data() + (static_cast<std::size_t>(b) * C + c) * L;
          const double* gr = out->grad.data() + (static_cast<std::size_t>(b) * C + c) * L;
          for (int t = 0; t < L; ++t) {
            sum_g += gr[t];
            sum_gx += gr[t] * (xr[t] - m) * is;
          }
        }
        if (gamma->requires_grad) gamma->grad[c] += sum_gx;
        if (beta->requires_grad) beta->grad[c] += sum_g;
        if (!dx) continue;
        if (mode == Mode::TRAIN) {
          // dx = (g*is/n) * (n*dy - sum(dy) - xhat * sum(dy*xhat))
          for (int b = 0; b < B; ++b) {
            const double* xr = x->data.data() + (static_cast<std::size_t>(b) * C + c) * L;
            const double* gr = out->grad.data() + (static_cast<std::size_t>(b) * C + c) * L;
            double* xg = x->grad.data() + (static_cast<std::size_t>(b) * C + c) * L;
            const double scale = g * is / n;
            for (int t = 0; t < L; ++t) {
              const double xhat = (xr[t] - m) * is;
              xg[t] += scale * (n * gr[t] - sum_g - xhat * sum_gx);
            }
          }
        } else {
          const double scale = g * is;
          for (int b = 0; b < B; ++b) {
            const double* gr = out->grad.data() + (static_cast<std::size_t>(b) * C + c) * L;
            double* xg = x->grad.data() + (static_cast<std::size_t>(b) * C + c) * L;
            for (int t = 0; t < L; ++t) xg[t] += scale * gr[t];
          }
        }
      }
    });
  }
  return out;
}

// --- dense / activations -------------------------------------------------------

// y[b,o] = sum_f x[b,f] * w[o,f] + bias[o]
inline TensorPtr dense(Tape* tape, const TensorPtr& x, const TensorPtr& w,
                       const TensorPtr& bias = nullptr) {
  detail::require(x->shape.size() == 2, "dense input must be [B,F]");
  detail::require(w->shape.size() == 2, "dense weight must be [O,F]");
  const int B = x->shape[0], F = x->shape[1], O = w->shape[0];
  detail::require(w->shape[1] == F, "dense feature mismatch");
  if (bias) detail::require(bias->size() == O, "dense bias size mismatch");

  bool track = detail::wants_grad(tape, {&x, &w, &bias});
  auto out = make_tensor({B, O}, track);
  for (int b = 0; b < B; ++b) {
    const double* xr = x->data.data() + static_cast<std::size_t>(b) * F;
    double* yr = out->data.data() + static_cast<std::size_t>(b) * O;
    for (int o = 0; o < O; ++o) {
      const double* wr = w->data.data() + static_cast<std::size_t>(o) * F;
      double acc = bias ? bias->data[o] : 0.0;
      for (int f = 0; f < F; ++f) acc += xr[f] * wr[f];
      yr[o] = acc;
    }
  }
  if (track) {
    tape->record([x, w, bias, out, B, F, O]() {
      const bool dx = x->requires_grad, dw = w->requires_grad;
      const bool db = bias && bias->requires_grad;
      if (dx) x->ensure_grad();
      if (dw) w->ensure_grad();
      if (db) bias->ensure_grad();
      for (int b = 0; b < B; ++b) {
        const double* gr = out->grad.data() + static_cast<std::size_t>(b) * O;
        const double* xr = x->data.data() + static_cast<std::size_t>(b) * F;
        for (int o = 0; o < O; ++o) {
          const double g = gr[o];
          if (g == 0.0) continue;
          const double* wr = w->data.data() + static_cast<std::size_t>(o) * F;
          if (dx) {
            double* xg = x->grad.data() + static_cast<std::size_t>(b) * F;
            for (int f = 0; f < F; ++f) xg[f] += g * wr[f];
          }
          if (dw) {
            double* wg = w->grad.data() + static_cast<std::size_t>(o) * F;
            for (int f = 0; f < F; ++f) wg[f] += g * xr[f];
          }
          if (db) bias->grad[o] += g;
        }
      }
    });
  }
  return out;
}

inline TensorPtr relu(Tape* tape, const TensorPtr& x) {
  bool track = detail::wants_grad(tape, {&x});
  auto out = make_tensor(x->shape, track);
  for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
  if (track) {
    tape->record([x, out]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < x->data.size(); ++i)
        if (x->data[i] > 0.0) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

inline TensorPtr sigmoid(Tape* tape, const TensorPtr& x) {
  bool track = detail::wants_grad(tape, {&x});
  auto out = make_tensor(x->shape, track);
  for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = 1.0 / (1.0 + std::exp(-x->data[i]));
  if (track) {
    tape->record([x, out]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < x->data.size(); ++i) {
        const double y = out->data[i];
        x->grad[i] += out->grad[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

inline TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  detail::require(a->shape == b->shape, "add shape mismatch");
  bool track = detail::wants_grad(tape, {&a, &b});
  auto out = make_tensor(a->shape, track);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
  if (track) {
    tape->record([a, b, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

inline TensorPtr concat_channels(Tape* tape, const std::vector<TensorPtr>& xs) {
  detail::require(!xs.empty(), "concat_channels needs at least one input");
  const int B = xs[0]->shape[0], L = xs[0]->shape[2];
  int C_total = 0;
  for (const auto& x : xs) {
    detail::require(x->shape.size() == 3, "concat_channels inputs must be [B,C,L]");
    detail::require(x->shape[0] == B && x->shape[2] == L, "concat_channels batch/length mismatch");
    C_total += x->shape[1];
  }
  bool track = false;
  if (tape)
    for (const auto& x : xs)
      if (x->requires_grad) track = true;

  auto out = make_tensor({B, C_total, L}, track);
  for (int b = 0; b < B; ++b) {
    int c_off = 0;
    for (const auto& x : xs) {
      const int C = x->shape[1];
      const double* src = x->data.data() + static_cast<std::size_t>(b) * C * L;
      double* dst = out->data.data() + (static_cast<std::size_t>(b) * C_total + c_off) * L;
      std::copy(src, src + static_cast<std::size_t>(C) * L, dst);
      c_off += C;
    }
  }
  if (track) {
    auto inputs = xs;
    tape->record([inputs, out, B, C_total, L]() {
      for (int b = 0; b < B; ++b) {
        int c_off = 0;
        for (const auto& x : inputs) {
          const int C = x->shape[1];
          if (x->requires_grad) {
            x->ensure_grad();
            const double* src = out->grad.data() + (static_cast<std::size_t>(b) * C_total + c_off) * L;
            double* dst = x->grad.data() + static_cast<std::size_t>(b) * C * L;
            for (std::size_t i = 0; i < static_cast<std::size_t>(C) * L; ++i) dst[i] += src[i];
          }
          c_off += C;
        }
      }
    });
  }
  return out;
}

// Row-wise softmax over the class axis, with max subtraction.
inline TensorPtr softmax(Tape* tape, const TensorPtr& x) {
  detail::require(x->shape.size() == 2, "softmax input must be [B,K]");
  const int B = x->shape[0], K = x->shape[1];
  bool track = detail::wants_grad(tape, {&x});
  auto out = make_tensor({B, K}, track);
  for (int b = 0; b < B; ++b) {
    const double* xr = x->data.data() + static_cast<std::size_t>(b) * K;
    double* yr = out->data.data() + static_cast<std::size_t>(b) * K;
    double mx = xr[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, xr[k]);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
      yr[k] = std::exp(xr[k] - mx);
      sum += yr[k];
    }
    for (int k = 0; k < K; ++k) yr[k] /= sum;
  }
  if (track) {
    tape->record([x, out, B, K]() {
      x->ensure_grad();
      for (int b = 0; b < B; ++b) {
        const double* yr = out->data.data() + static_cast<std::size_t>(b) * K;
        const double* gr = out->grad.data() + static_cast<std::size_t>(b) * K;
        double* xg = x->grad.data() + static_cast<std::size_t>(b) * K;
        double dot = 0.0;
        for (int k = 0; k < K; ++k) dot += gr[k] * yr[k];
        for (int k = 0; k < K; ++k) xg[k] += yr[k] * (gr[k] - dot);
      }
    });
  }
  return out;
}

// Expands a single positive-class probability column [B,1] into the implied
// two-class distribution [B,2] = {1-p, p} so binary sigmoid heads can share
// the categorical loss.
inline TensorPtr binary_class_probs(Tape* tape, const TensorPtr& p) {
  detail::require(p->shape.size() == 2 && p->shape[1] == 1, "binary_class_probs input must be [B,1]");
  const int B = p->shape[0];
  bool track = detail::wants_grad(tape, {&p});
  auto out = make_tensor({B, 2}, track);
  for (int b = 0; b < B; ++b) {
    out->data[2 * b] = 1.0 - p->data[b];
    out->data[2 * b + 1] = p->data[b];
  }
  if (track) {
    tape->record([p, out, B]() {
      p->ensure_grad();
      for (int b = 0; b < B; ++b) p->grad[b] += out->grad[2 * b + 1] - out->grad[2 * b];
    });
  }
  return out;
}

// --- loss ---------------------------------------------------------------------

constexpr double kLossEps = 1e-12;

// loss = -(1/B) * sum_b sum_k w_k * t_bk * log(p_bk + eps)
// Targets are one-hot and never receive gradient.
inline TensorPtr weighted_cce(Tape* tape, const TensorPtr& probs, const TensorPtr& targets,
                              const std::vector<double>& class_weights) {
  detail::require(probs->shape.size() == 2, "weighted_cce probs must be [B,K]");
  detail::require(probs->shape == targets->shape, "weighted_cce target shape mismatch");
  const int B = probs->shape[0], K = probs->shape[1];
  detail::require(static_cast<int>(class_weights.size()) == K, "weighted_cce weight count mismatch");
  for (double w : class_weights)
    if (!(w > 0.0)) throw ShapeMismatch("class weights must be positive");
  for (int b = 0; b < B; ++b) {
    double row = 0.0;
    for (int k = 0; k < K; ++k) row += probs->data[static_cast<std::size_t>(b) * K + k];
    if (std::abs(row - 1.0) > 1e-6)
      throw NonDistribution("probability row " + std::to_string(b) + " sums to " + std::to_string(row));
  }

  bool track = detail::wants_grad(tape, {&probs});
  auto out = make_tensor({1}, track);
  double loss = 0.0;
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) {
      const double t = targets->data[static_cast<std::size_t>(b) * K + k];
      if (t != 0.0)
        loss -= class_weights[k] * t * std::log(probs->data[static_cast<std::size_t>(b) * K + k] + kLossEps);
    }
  out->data[0] = loss / B;

  if (track) {
    auto weights = class_weights;
    tape->record([probs, targets, out, weights, B, K]() {
      probs->ensure_grad();
      const double g = out->grad[0];
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k) {
          const std::size_t i = static_cast<std::size_t>(b) * K + k;
          const double t = targets->data[i];
          if (t != 0.0) probs->grad[i] -= g * weights[k] * t / (B * (probs->data[i] + kLossEps));
        }
    });
  }
  return out;
}

// --- init ----------------------------------------------------------------------

// He-uniform: U(-limit, limit) with limit = sqrt(6 / fan_in).
inline void he_uniform_init(Tensor& t, std::int64_t fan_in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.data) v = dist(rng);
}

}  // namespace pcgnet::ad
