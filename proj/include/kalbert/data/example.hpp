// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace kalbert::data {

inline constexpr std::int32_t kIgnore = -1;

/// One fully labeled training instance. All per-position channels have
/// length seq_len; label channels use kIgnore for unlabeled positions.
struct CorruptedExample {
  std::vector<std::int32_t> input_ids;
  std::vector<std::int32_t> token_type_ids;
  std::vector<std::uint8_t> attention_mask;
  /// Original token id at MLM-selected positions.
  std::vector<std::int32_t> mlm_labels;
  /// 0 in order, 1 swapped.
  std::int32_t sop_label = 0;
  /// Original absolute position of the token now at this index, for moved tokens.
  std::vector<std::int32_t> wop_labels;

  std::size_t seq_len() const noexcept { return input_ids.size(); }

  friend bool operator==(const CorruptedExample&, const CorruptedExample&) = default;
};

}  // namespace kalbert::data
