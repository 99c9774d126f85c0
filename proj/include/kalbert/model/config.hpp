// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include <nlohmann/json_fwd.hpp>

#include "kalbert/core/tensor.hpp"

namespace kalbert::model {

struct Objectives {
  bool mlm = true;
  bool sop = true;
  bool wop = true;
  double mlm_weight = 1.0;
  double sop_weight = 1.0;
  double wop_weight = 1.0;

  bool any() const noexcept { return mlm || sop || wop; }
  friend bool operator==(const Objectives&, const Objectives&) = default;
};

/// Encoder hyperparameters. Defaults are the base configuration (E=128,
/// H=768, L=12, A=12) with F=4H and P=512.
struct AlbertConfig {
  std::size_t vocab_size = 32000;
  std::size_t embedding_size = 128;
  std::size_t hidden_size = 768;
  std::size_t num_layers = 12;
  std::size_t num_heads = 12;
  std::size_t ffn_size = 3072;
  std::size_t max_positions = 512;
  std::size_t type_vocab = 2;
  std::size_t seq_len = 128;
  double dropout = 0.1;
  double layer_norm_eps = 1e-12;
  double init_std = 0.02;
  DType dtype = DType::float32;
  Objectives objectives;

  /// Throws InvalidConfig.
  void validate() const;

  friend bool operator==(const AlbertConfig&, const AlbertConfig&) = default;
};

/// The large variant: H=1024, F=4096, A=16, everything else as base.
AlbertConfig large_config();

nlohmann::json to_json(const AlbertConfig& cfg);
/// Strict: unknown keys are rejected, missing keys take defaults.
AlbertConfig albert_config_from_json(const nlohmann::json& doc);

}  // namespace kalbert::model
