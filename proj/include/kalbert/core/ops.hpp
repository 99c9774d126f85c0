// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "kalbert/core/rng.hpp"
#include "kalbert/core/tape.hpp"
#include "kalbert/core/tensor.hpp"

/// Differentiable tensor ops recorded on a Tape. Unless noted, ops treat
/// their inputs as row-major matrices (rows() x cols()).
namespace kalbert::ops {

inline constexpr int kIgnoreIndex = -1;

/// [m x k] . [k x n] -> [m x n]
template <Real T>
Var matmul(Tape<T>& tape, Var a, Var b);

/// [m x k] . [n x k]^T -> [m x n]
template <Real T>
Var matmul_transposed(Tape<T>& tape, Var a, Var b);

/// Elementwise sum of equally shaped tensors.
template <Real T>
Var add(Tape<T>& tape, Var a, Var b);

/// Elementwise product of equally shaped tensors.
template <Real T>
Var mul(Tape<T>& tape, Var a, Var b);

/// Adds bias[n] to every row of x[... x n].
template <Real T>
Var add_bias(Tape<T>& tape, Var x, Var bias);

template <Real T>
Var scale(Tape<T>& tape, Var x, T factor);

/// Sum of all elements, as a rank-0 tensor.
template <Real T>
Var sum(Tape<T>& tape, Var x);

/// 0.5 x (1 + erf(x / sqrt 2)).
template <Real T>
Var gelu(Tape<T>& tape, Var x);

template <Real T>
Var tanh(Tape<T>& tape, Var x);

/// Softmax over the last axis, max-shifted.
template <Real T>
Var softmax(Tape<T>& tape, Var logits);

/// gamma * (x - mean) / sqrt(var + eps) + beta over the last axis, with the
/// population variance.
template <Real T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, T eps);

/// Inverted dropout. Identity when !training or p == 0. Throws
/// InvalidProbability unless 0 <= p < 1.
template <Real T>
Var dropout(Tape<T>& tape, Var x, double p, bool training, Rng& rng);

/// Row gather: out[i] = table[indices[i]].
template <Real T>
Var gather_rows(Tape<T>& tape, Var table, std::span<const std::int32_t> indices);

template <Real T>
struct CrossEntropy {
  Var loss;
  std::size_t correct = 0;
  std::size_t labeled = 0;
};

/// Mean negative log-likelihood over rows whose label != ignore_index.
/// correct counts rows whose (first) argmax equals the label.
template <Real T>
CrossEntropy<T> masked_cross_entropy(Tape<T>& tape, Var logits, std::span<const std::int32_t> labels,
                                     std::int32_t ignore_index = kIgnoreIndex);

struct AttentionLayout {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::size_t heads = 0;
};

/// Scaled dot-product attention over packed projections q, k, v of shape
/// [batch*seq x hidden]. Keys with key_mask == 0 receive exactly zero
/// probability. Dropout (inverted) is applied to the attention
/// probabilities.
template <Real T>
Var multi_head_attention(Tape<T>& tape, Var q, Var k, Var v, std::span<const std::uint8_t> key_mask,
                         AttentionLayout layout, double dropout_p, bool training, Rng& rng);

/// Scalar GELU, shared by the op and by tests.
double gelu_value(double x);

}  // namespace kalbert::ops
