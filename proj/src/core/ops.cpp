// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace kalbert::ops {
namespace {

void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::ShapeMismatch, message);
}

template <Real T>
void require_matrix(const Tensor<T>& t, const char* name) {
  require(t.rank() == 2, std::string(name) + " must be a matrix, got " + shape_to_string(t.shape()));
}

// c[m x n] += a[m x k] . b[k x n]
template <Real T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    const T* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a[m x k] . b[n x k]^T
template <Real T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * k;
    T* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b.data() + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T . b[m x n]
template <Real T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * k;
    const T* brow = b.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      T* crow = c.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <Real T>
void axpy(std::span<T> dst, std::span<const T> src, T factor = T{1}) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

template <Real T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require_matrix(av, "matmul lhs");
  require_matrix(bv, "matmul rhs");
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  require(bv.shape()[0] == k, "matmul inner dims " + shape_to_string(av.shape()) + " . " +
                                  shape_to_string(bv.shape()));
  Tensor<T> out({m, n});
  gemm_nn<T>(av.data(), bv.data(), out.data(), m, k, n);
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& t, Var self) {
    const auto& g = t.grad_buffer(self);
    if (t.requires_grad(a)) gemm_nt<T>(g.data(), t.value(b).data(), t.grad_buffer(a).data(), m, n, k);
    if (t.requires_grad(b)) gemm_tn<T>(t.value(a).data(), g.data(), t.grad_buffer(b).data(), m, k, n);
  });
}

template <Real T>
Var matmul_transposed(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require_matrix(av, "matmul_transposed lhs");
  require_matrix(bv, "matmul_transposed rhs");
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[0];
  require(bv.shape()[1] == k, "matmul_transposed inner dims " + shape_to_string(av.shape()) + " . " +
                                  shape_to_string(bv.shape()) + "^T");
  Tensor<T> out({m, n});
  gemm_nt<T>(av.data(), bv.data(), out.data(), m, k, n);
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& t, Var self) {
    const auto& g = t.grad_buffer(self);
    if (t.requires_grad(a)) gemm_nn<T>(g.data(), t.value(b).data(), t.grad_buffer(a).data(), m, n, k);
    if (t.requires_grad(b)) gemm_tn<T>(g.data(), t.value(a).data(), t.grad_buffer(b).data(), m, n, k);
  });
}

template <Real T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require(av.shape() == bv.shape(),
          "add of " + shape_to_string(av.shape()) + " and " + shape_to_string(bv.shape()));
  Tensor<T> out = av;
  out.set_requires_grad(false);
  axpy<T>(out.data(), bv.data());
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const auto& g = t.grad_buffer(self);
    if (t.requires_grad(a)) axpy<T>(t.grad_buffer(a).data(), g.data());
    if (t.requires_grad(b)) axpy<T>(t.grad_buffer(b).data(), g.data());
  });
}

template <Real T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require(av.shape() == bv.shape(),
          "mul of " + shape_to_string(av.shape()) + " and " + shape_to_string(bv.shape()));
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const auto& g = t.grad_buffer(self);
    if (t.requires_grad(a)) {
      auto& ga = t.grad_buffer(a);
      const auto& bv = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad_buffer(b);
      const auto& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <Real T>
Var add_bias(Tape<T>& tape, Var x, Var bias) {
  const auto& xv = tape.value(x);
  const auto& bv = tape.value(bias);
  require(bv.rank() == 1 && bv.size() == xv.cols(),
          "bias " + shape_to_string(bv.shape()) + " does not match " + shape_to_string(xv.shape()));
  Tensor<T> out(xv.shape());
  const std::size_t rows = xv.rows(), cols = xv.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + bv[c];
  }
  return tape.record(std::move(out), {x, bias}, [x, bias, rows, cols](Tape<T>& t, Var self) {
    const auto& g = t.grad_buffer(self);
    if (t.requires_grad(x)) axpy<T>(t.grad_buffer(x).data(), g.data());
    if (t.requires_grad(bias)) {
      auto& gb = t.grad_buffer(bias);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
    }
  });
}

template <Real T>
Var scale(Tape<T>& tape, Var x, T factor) {
  Tensor<T> out = tape.value(x);
  out.set_requires_grad(false);
  for (T& v : out.data()) v *= factor;
  return tape.record(std::move(out), {x}, [x, factor](Tape<T>& t, Var self) {
    axpy<T>(t.grad_buffer(x).data(), t.grad_buffer(self).data(), factor);
  });
}

template <Real T>
Var sum(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  T acc{0};
  for (T v : xv.data()) acc += v;
  return tape.record(Tensor<T>(Shape{}, std::vector<T>{acc}), {x}, [x](Tape<T>& t, Var self) {
    const T g = t.grad_buffer(self)[0];
    for (T& v : t.grad_buffer(x).data()) v += g;
  });
}

template <Real T>
Var gelu(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(gelu_value(xv[i]));
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const auto& g = t.grad_buffer(self);
    const auto& xv = t.value(x);
    auto& gx = t.grad_buffer(x);
    constexpr double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double z = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * z * z);
      gx[i] += g[i] * static_cast<T>(cdf + z * pdf);
    }
  });
}

template <Real T>
Var tanh(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const auto& g = t.grad_buffer(self);
    const auto& y = t.value(self);
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (T{1} - y[i] * y[i]);
  });
}

template <Real T>
Var softmax(Tape<T>& tape, Var logits) {
  const auto& xv = tape.value(logits);
  require(xv.cols() >= 1, "softmax over an empty axis");
  Tensor<T> out(xv.shape());
  const std::size_t rows = xv.rows(), cols = xv.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto in = xv.row(r);
    auto o = out.row(r);
    const T mx = *std::max_element(in.begin(), in.end());
    T total{0};
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (T& v : o) v /= total;
  }
  return tape.record(std::move(out), {logits}, [logits, rows, cols](Tape<T>& t, Var self) {
    const auto& g = t.grad_buffer(self);
    const auto& y = t.value(self);
    auto& gx = t.grad_buffer(logits);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * cols;
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += g[base + c] * y[base + c];
      for (std::size_t c = 0; c < cols; ++c) gx[base + c] += y[base + c] * (g[base + c] - dot);
    }
  });
}

template <Real T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, T eps) {
  const auto& xv = tape.value(x);
  const auto& gv = tape.value(gamma);
  const auto& bv = tape.value(beta);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  require(gv.size() == cols && bv.size() == cols,
          "layer_norm affine params do not match width " + std::to_string(cols));
  if (!(eps >= T{0})) fail(ErrorCode::InvalidConfig, "layer_norm eps must be non-negative");

  Tensor<T> out(xv.shape());
  auto normalized = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto in = xv.row(r);
    T mean{0};
    for (T v : in) mean += v;
    mean /= static_cast<T>(cols);
    T var{0};
    for (T v : in) var += (v - mean) * (v - mean);
    var /= static_cast<T>(cols);
    const T inv = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) {
      const T xhat = (in[c] - mean) * inv;
      (*normalized)[r * cols + c] = xhat;
      out[r * cols + c] = gv[c] * xhat + bv[c];
    }
  }
  return tape.record(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, rows, cols, normalized, inv_std](Tape<T>& t, Var self) {
                       const auto& g = t.grad_buffer(self);
                       const auto& xhat = *normalized;
                       if (t.requires_grad(gamma)) {
                         auto& gg = t.grad_buffer(gamma);
                         for (std::size_t i = 0; i < g.size(); ++i) gg[i % cols] += g[i] * xhat[i];
                       }
                       if (t.requires_grad(beta)) {
                         auto& gb = t.grad_buffer(beta);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
                       }
                       if (t.requires_grad(x)) {
                         const auto& gv = t.value(gamma);
                         auto& gx = t.grad_buffer(x);
                         const T n = static_cast<T>(cols);
                         for (std::size_t r = 0; r < rows; ++r) {
                           const std::size_t base = r * cols;
                           T mean_d{0};
                           T mean_dx{0};
                           for (std::size_t c = 0; c < cols; ++c) {
                             const T d = g[base + c] * gv[c];
                             mean_d += d;
                             mean_dx += d * xhat[base + c];
                           }
                           mean_d /= n;
                           mean_dx /= n;
                           const T inv = (*inv_std)[r];
                           for (std::size_t c = 0; c < cols; ++c) {
                             const T d = g[base + c] * gv[c];
                             gx[base + c] += inv * (d - mean_d - xhat[base + c] * mean_dx);
                           }
                         }
                       }
                     });
}

template <Real T>
Var dropout(Tape<T>& tape, Var x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    fail(ErrorCode::InvalidProbability, "dropout probability " + std::to_string(p) + " not in [0, 1)");
  }
  if (!training || p == 0.0) return x;
  const auto& xv = tape.value(x);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<T>>(xv.size());
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    (*mask)[i] = rng.bernoulli(p) ? T{0} : keep_scale;
    out[i] = xv[i] * (*mask)[i];
  }
  return tape.record(std::move(out), {x}, [x, mask](Tape<T>& t, Var self) {
    const auto& g = t.grad_buffer(self);
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

template <Real T>
Var gather_rows(Tape<T>& tape, Var table, std::span<const std::int32_t> indices) {
  const auto& tv = tape.value(table);
  require_matrix(tv, "gather table");
  const std::size_t rows = tv.shape()[0], cols = tv.shape()[1];
  auto idx = std::make_shared<std::vector<std::int32_t>>(indices.begin(), indices.end());
  Tensor<T> out({idx->size(), cols});
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const auto r = (*idx)[i];
    if (r < 0 || static_cast<std::size_t>(r) >= rows) {
      fail(ErrorCode::IndexOutOfRange, "gather index " + std::to_string(r) + " outside [0, " +
                                           std::to_string(rows) + ")");
    }
    std::copy_n(tv.row(static_cast<std::size_t>(r)).begin(), cols, out.row(i).begin());
  }
  return tape.record(std::move(out), {table}, [table, idx, cols](Tape<T>& t, Var self) {
    const auto& g = t.grad_buffer(self);
    auto& gt = t.grad_buffer(table);
    for (std::size_t i = 0; i < idx->size(); ++i) {
      axpy<T>(gt.row(static_cast<std::size_t>((*idx)[i])), g.row(i));
    }
    (void)cols;
  });
}

template <Real T>
CrossEntropy<T> masked_cross_entropy(Tape<T>& tape, Var logits, std::span<const std::int32_t> labels,
                                     std::int32_t ignore_index) {
  const auto& lv = tape.value(logits);
  const std::size_t rows = lv.rows(), classes = lv.cols();
  require(labels.size() == rows, "cross entropy over " + std::to_string(rows) + " rows with " +
                                     std::to_string(labels.size()) + " labels");
  CrossEntropy<T> result;
  for (const auto label : labels) {
    if (label == ignore_index) continue;
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      fail(ErrorCode::LabelOutOfRange,
           "label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
    ++result.labeled;
  }
  if (result.labeled == 0) fail(ErrorCode::EmptyLabelSet, "every label is the ignore index");

  // Probabilities of labeled rows, kept for the backward pass.
  auto probs = std::make_shared<std::vector<T>>(rows * classes, T{0});
  auto lab = std::make_shared<std::vector<std::int32_t>>(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto label = labels[r];
    if (label == ignore_index) continue;
    const auto in = lv.row(r);
    const auto argmax = static_cast<std::size_t>(std::max_element(in.begin(), in.end()) - in.begin());
    const double mx = in[argmax];
    double denom = 0.0;
    for (T v : in) denom += std::exp(static_cast<double>(v) - mx);
    const double log_denom = std::log(denom);
    total += -(static_cast<double>(in[static_cast<std::size_t>(label)]) - mx - log_denom);
    for (std::size_t c = 0; c < classes; ++c) {
      (*probs)[r * classes + c] = static_cast<T>(std::exp(static_cast<double>(in[c]) - mx - log_denom));
    }
    if (argmax == static_cast<std::size_t>(label)) ++result.correct;
  }
  const T inv_n = static_cast<T>(1.0 / static_cast<double>(result.labeled));
  const T mean = static_cast<T>(total / static_cast<double>(result.labeled));
  result.loss = tape.record(
      Tensor<T>(Shape{}, std::vector<T>{mean}), {logits},
      [logits, probs, lab, rows, classes, inv_n, ignore_index](Tape<T>& t, Var self) {
        const T g = t.grad_buffer(self)[0] * inv_n;
        auto& gl = t.grad_buffer(logits);
        for (std::size_t r = 0; r < rows; ++r) {
          const auto label = (*lab)[r];
          if (label == ignore_index) continue;
          const std::size_t base = r * classes;
          for (std::size_t c = 0; c < classes; ++c) gl[base + c] += g * (*probs)[base + c];
          gl[base + static_cast<std::size_t>(label)] -= g;
        }
      });
  return result;
}

template <Real T>
Var multi_head_attention(Tape<T>& tape, Var q, Var k, Var v, std::span<const std::uint8_t> key_mask,
                         AttentionLayout layout, double dropout_p, bool training, Rng& rng) {
  const auto& qv = tape.value(q);
  const auto& kv = tape.value(k);
  const auto& vv = tape.value(v);
  const std::size_t batch = layout.batch, seq = layout.seq, heads = layout.heads;
  const std::size_t hidden = qv.cols();
  require(heads >= 1 && hidden % heads == 0,
          "hidden " + std::to_string(hidden) + " not divisible by " + std::to_string(heads) + " heads");
  require(qv.shape() == kv.shape() && qv.shape() == vv.shape() && qv.rows() == batch * seq,
          "attention projections must all be [batch*seq x hidden]");
  require(key_mask.size() == batch * seq, "key mask length does not match batch*seq");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    fail(ErrorCode::InvalidProbability, "attention dropout " + std::to_string(dropout_p));
  }
  const bool drop = training && dropout_p > 0.0;
  const std::size_t head_dim = hidden / heads;
  const T scale_factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
  const T keep_scale = static_cast<T>(drop ? 1.0 / (1.0 - dropout_p) : 1.0);

  // probs[b][h][i][j] before dropout; drop_mask holds the per-entry multiplier.
  const std::size_t block = seq * seq;
  auto probs = std::make_shared<std::vector<T>>(batch * heads * block, T{0});
  auto drop_mask = std::make_shared<std::vector<T>>(drop ? batch * heads * block : 0, T{0});
  auto mask = std::make_shared<std::vector<std::uint8_t>>(key_mask.begin(), key_mask.end());
  Tensor<T> out({batch * seq, hidden});
  std::vector<T> scores(seq);

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      T* pblock = probs->data() + (b * heads + h) * block;
      const std::size_t off = h * head_dim;
      for (std::size_t i = 0; i < seq; ++i) {
        const T* qi = qv.data().data() + (b * seq + i) * hidden + off;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < seq; ++j) {
          if ((*mask)[b * seq + j] == 0) continue;
          const T* kj = kv.data().data() + (b * seq + j) * hidden + off;
          T dot{0};
          for (std::size_t d = 0; d < head_dim; ++d) dot += qi[d] * kj[d];
          scores[j] = dot * scale_factor;
          mx = std::max(mx, scores[j]);
        }
        T total{0};
        for (std::size_t j = 0; j < seq; ++j) {
          if ((*mask)[b * seq + j] == 0) continue;
          pblock[i * seq + j] = std::exp(scores[j] - mx);
          total += pblock[i * seq + j];
        }
        if (total > T{0}) {
          for (std::size_t j = 0; j < seq; ++j) pblock[i * seq + j] /= total;
        }
        T* orow = out.data().data() + (b * seq + i) * hidden + off;
        for (std::size_t j = 0; j < seq; ++j) {
          T w = pblock[i * seq + j];
          if (drop) {
            const T m = rng.bernoulli(dropout_p) ? T{0} : keep_scale;
            (*drop_mask)[(b * heads + h) * block + i * seq + j] = m;
            w *= m;
          }
          if (w == T{0}) continue;
          const T* vj = vv.data().data() + (b * seq + j) * hidden + off;
          for (std::size_t d = 0; d < head_dim; ++d) orow[d] += w * vj[d];
        }
      }
    }
  }

  return tape.record(
      std::move(out), {q, k, v},
      [q, k, v, probs, drop_mask, batch, seq, heads, hidden, head_dim, scale_factor, drop](Tape<T>& t,
                                                                                         Var self) {
        const auto& g = t.grad_buffer(self);
        const auto& qv = t.value(q);
        const auto& kv = t.value(k);
        const auto& vv = t.value(v);
        T* gq = t.requires_grad(q) ? t.grad_buffer(q).data().data() : nullptr;
        T* gk = t.requires_grad(k) ? t.grad_buffer(k).data().data() : nullptr;
        T* gv = t.requires_grad(v) ? t.grad_buffer(v).data().data() : nullptr;
        const std::size_t block = seq * seq;
        std::vector<T> d_probs(seq);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const T* pblock = probs->data() + (b * heads + h) * block;
            const T* mblock = drop ? drop_mask->data() + (b * heads + h) * block : nullptr;
            const std::size_t off = h * head_dim;
            for (std::size_t i = 0; i < seq; ++i) {
              const T* gi = g.data().data() + (b * seq + i) * hidden + off;
              T weighted{0};
              for (std::size_t j = 0; j < seq; ++j) {
                const T p = pblock[i * seq + j];
                if (p == T{0}) {
                  d_probs[j] = T{0};
                  continue;
                }
                const T m = drop ? mblock[i * seq + j] : T{1};
                const T* vj = vv.data().data() + (b * seq + j) * hidden + off;
                T dot{0};
                for (std::size_t d = 0; d < head_dim; ++d) dot += gi[d] * vj[d];
                d_probs[j] = dot * m;
                weighted += p * d_probs[j];
                if (gv != nullptr && m != T{0}) {
                  T* gvj = gv + (b * seq + j) * hidden + off;
                  const T w = p * m;
                  for (std::size_t d = 0; d < head_dim; ++d) gvj[d] += w * gi[d];
                }
              }
              const T* qi = qv.data().data() + (b * seq + i) * hidden + off;
              T* gqi = gq != nullptr ? gq + (b * seq + i) * hidden + off : nullptr;
              for (std::size_t j = 0; j < seq; ++j) {
                const T p = pblock[i * seq + j];
                if (p == T{0}) continue;
                const T ds = p * (d_probs[j] - weighted) * scale_factor;
                if (ds == T{0}) continue;
                const T* kj = kv.data().data() + (b * seq + j) * hidden + off;
                if (gqi != nullptr) {
                  for (std::size_t d = 0; d < head_dim; ++d) gqi[d] += ds * kj[d];
                }
                if (gk != nullptr) {
                  T* gkj = gk + (b * seq + j) * hidden + off;
                  for (std::size_t d = 0; d < head_dim; ++d) gkj[d] += ds * qi[d];
                }
              }
            }
          }
        }
      });
}

#define KALBERT_INSTANTIATE_OPS(T)                                                                    \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                         \
  template Var matmul_transposed<T>(Tape<T>&, Var, Var);                                              \
  template Var add<T>(Tape<T>&, Var, Var);                                                            \
  template Var mul<T>(Tape<T>&, Var, Var);                                                            \
  template Var add_bias<T>(Tape<T>&, Var, Var);                                                       \
  template Var scale<T>(Tape<T>&, Var, T);                                                            \
  template Var sum<T>(Tape<T>&, Var);                                                                 \
  template Var gelu<T>(Tape<T>&, Var);                                                                \
  template Var tanh<T>(Tape<T>&, Var);                                                                \
  template Var softmax<T>(Tape<T>&, Var);                                                             \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                             \
  template Var dropout<T>(Tape<T>&, Var, double, bool, Rng&);                                         \
  template Var gather_rows<T>(Tape<T>&, Var, std::span<const std::int32_t>);                          \
  template CrossEntropy<T> masked_cross_entropy<T>(Tape<T>&, Var, std::span<const std::int32_t>,      \
                                                   std::int32_t);                                     \
  template Var multi_head_attention<T>(Tape<T>&, Var, Var, Var, std::span<const std::uint8_t>,        \
                                       AttentionLayout, double, bool, Rng&);

KALBERT_INSTANTIATE_OPS(float)
KALBERT_INSTANTIATE_OPS(double)

#undef KALBERT_INSTANTIATE_OPS

}  // namespace kalbert::ops
