// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "kalbert/core/rng.hpp"
#include "kalbert/core/tensor.hpp"
#include "kalbert/data/example.hpp"
#include "kalbert/model/config.hpp"
#include "kalbert/model/params.hpp"

namespace kalbert::model {

/// Column-major-free flattening of B examples of length T: index b*T + t.
struct Batch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<std::int32_t> input_ids;
  std::vector<std::int32_t> token_type_ids;
  std::vector<std::uint8_t> attention_mask;
  std::vector<std::int32_t> mlm_labels;
  std::vector<std::int32_t> wop_labels;
  std::vector<std::int32_t> sop_labels;
};

/// Throws ShapeMismatch when examples disagree in length.
Batch make_batch(std::span<const data::CorruptedExample> examples);

struct ObjectiveStats {
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t labeled = 0;

  /// Absent when nothing was labeled.
  std::optional<double> accuracy() const {
    if (labeled == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(labeled);
  }
};

template <Real T>
struct ForwardOutput {
  Tensor<T> hidden;  // [B x T x H]
  /// Logits are filled only when requested (ForwardOptions::keep_logits).
  std::optional<Tensor<T>> mlm_logits;  // [B x T x V]
  std::optional<Tensor<T>> sop_logits;  // [B x 2]
  std::optional<Tensor<T>> wop_logits;  // [B x T x P]
  /// Present iff the objective is enabled; a channel without labels in the
  /// batch reports zero loss and zero labeled positions.
  std::optional<ObjectiveStats> mlm;
  std::optional<ObjectiveStats> sop;
  std::optional<ObjectiveStats> wop;
  /// Weighted sum mlm + sop + wop, accumulated in that order in T.
  T total_loss{0};
};

struct ForwardOptions {
  bool training = false;
  /// Materialize full logit tensors. Without it the MLM and WOP heads run
  /// only on labeled rows, which yields identical losses.
  bool keep_logits = true;
};

template <Real T>
using Gradients = std::map<std::string, Tensor<T>, std::less<>>;

/// Inference-style pass (no gradients). rng is required only in training mode.
template <Real T>
ForwardOutput<T> forward(const ParameterSet<T>& params, const AlbertConfig& cfg, const Batch& batch,
                         const ForwardOptions& options = {}, Rng* rng = nullptr);

/// Forward plus reverse pass; gradients has one entry per parameter (zeros
/// where the loss does not depend on it).
template <Real T>
ForwardOutput<T> forward_backward(const ParameterSet<T>& params, const AlbertConfig& cfg, const Batch& batch,
                                  const ForwardOptions& options, Rng& rng, Gradients<T>& gradients);

/// Embedding block: word + position + type, layer norm, projection to H.
/// Returns [B*T x H]. Eval mode.
template <Real T>
Tensor<T> embed(const ParameterSet<T>& params, const AlbertConfig& cfg, const Batch& batch);

/// One application of the shared encoder layer on [B*T x H]. Eval mode.
template <Real T>
Tensor<T> apply_shared_layer(const ParameterSet<T>& params, const AlbertConfig& cfg, const Tensor<T>& hidden,
                             std::span<const std::uint8_t> attention_mask, std::size_t batch, std::size_t seq);

struct MetricsFragment {
  std::optional<double> loss_mlm;
  std::optional<double> loss_sop;
  std::optional<double> loss_wop;
  std::optional<double> acc_mlm;
  std::optional<double> acc_sop;
  std::optional<double> acc_wop;
  double loss_total = 0.0;
};

/// Per-objective loss and accuracy; disabled objectives stay absent.
template <Real T>
MetricsFragment compute_metrics(const ForwardOutput<T>& output);

}  // namespace kalbert::model
