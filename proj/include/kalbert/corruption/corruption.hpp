// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kalbert/core/rng.hpp"
#include "kalbert/data/corpus.hpp"
#include "kalbert/data/example.hpp"

/// Turns packed segment pairs into labeled examples: sentence-order swap,
/// whole-word masking, then token shuffling within mask-free spans.
namespace kalbert::corruption {

struct CorruptionConfig {
  double mlm_rate = 0.15;
  double mask_prob = 0.8;
  double random_prob = 0.1;
  double keep_prob = 0.1;
  /// Probability that an example receives word-order corruption.
  double p_wop = 0.30;
  /// Upper bound on the fraction of eligible tokens that are shuffled.
  double wop_rate = 0.15;
  bool enable_mlm = true;
  bool enable_sop = true;
  bool enable_wop = true;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig / InvalidProbability.
  void validate() const;

  friend bool operator==(const CorruptionConfig&, const CorruptionConfig&) = default;
};

struct SopResult {
  data::PackedInput packed;
  std::int32_t label = 0;
};

/// Packs the pair in the given order; label is 1 iff swapped.
SopResult sop_with_order(const data::SegmentPair& pair, bool swap, std::size_t seq_len);

/// Bernoulli(0.5) swap, then sop_with_order.
SopResult apply_sop(const data::SegmentPair& pair, std::size_t seq_len, Rng& rng);

enum class MlmAction : std::uint8_t { Mask, Random, Keep };

struct MlmResult {
  std::vector<std::int32_t> input_ids;
  std::vector<std::int32_t> labels;
  /// One entry per selected word, in selection order.
  std::vector<MlmAction> actions;
};

/// Whole-word masking. Words are drawn uniformly without replacement; a
/// word that would push the selected-token count past
/// ceil(mlm_rate * non-special tokens) is skipped. At least one word is
/// selected whenever mlm_rate > 0 and a maskable word exists.
MlmResult apply_mlm(std::span<const std::int32_t> input_ids, std::span<const std::uint8_t> attention_mask,
                    std::span<const text::WordSpan> word_spans, std::size_t vocab_size,
                    const CorruptionConfig& cfg, Rng& rng);

struct WopResult {
  std::vector<std::int32_t> input_ids;
  std::vector<std::int32_t> labels;
  /// Outcome of the per-example Bernoulli(p_wop) draw.
  bool selected = false;
};

/// Positions that may take part in word-order shuffling: attended tokens
/// other than PAD/UNK/CLS/SEP/MASK.
std::vector<bool> wop_eligible(std::span<const std::int32_t> input_ids, std::span<const std::uint8_t> attention_mask);

/// Token shuffling. Must run after masking: MASK tokens delimit spans.
/// floor(wop_rate * eligible) positions are sampled uniformly; inside each
/// maximal eligible span with >= 2 samples the sampled tokens are permuted
/// by a uniform derangement. labels[i] is the original index of the token
/// now at i.
WopResult apply_wop(std::span<const std::int32_t> input_ids, std::span<const std::uint8_t> attention_mask,
                    const CorruptionConfig& cfg, Rng& rng);

/// Intermediate states of one build_example call.
struct ExampleTrace {
  data::PackedInput packed;
  std::vector<std::int32_t> post_mlm_ids;
  std::vector<MlmAction> mlm_actions;
  bool wop_selected = false;
};

/// Stream seed of one example: a pure function of (cfg.seed, index).
std::uint64_t example_seed(const CorruptionConfig& cfg, std::uint64_t example_index);

/// SOP pack -> MLM -> WOP, with randomness keyed by (cfg.seed, example_index).
data::CorruptedExample build_example(const data::SegmentPair& pair, std::size_t vocab_size, std::size_t seq_len,
                                     const CorruptionConfig& cfg, std::uint64_t example_index,
                                     ExampleTrace* trace = nullptr);

struct PrepareStats {
  std::size_t examples = 0;
  std::size_t skipped_pairs = 0;
  std::size_t maskable_tokens = 0;
  std::size_t mlm_selected_tokens = 0;
  std::size_t mlm_words = 0;
  std::size_t mlm_mask_words = 0;
  std::size_t mlm_random_words = 0;
  std::size_t mlm_keep_words = 0;
  std::size_t wop_selected = 0;  // drawn for reordering
  std::size_t wop_examples = 0;  // at least one token actually moved
  std::size_t wop_moved_tokens = 0;
  std::size_t wop_eligible_tokens = 0;
  std::size_t swapped = 0;

  double masked_fraction() const;
  /// Share of examples drawn for reordering.
  double wop_fraction() const;
  /// Share of examples in which at least one token moved.
  double wop_moved_fraction() const;
};

struct PreparedExamples {
  std::vector<data::CorruptedExample> examples;
  PrepareStats stats;
};

/// Builds one example per pair (example index = pair index). Pairs whose
/// segments cannot be packed are skipped and counted.
PreparedExamples prepare_examples(std::span<const data::SegmentPair> pairs, std::size_t vocab_size,
                                  std::size_t seq_len, const CorruptionConfig& cfg);

}  // namespace kalbert::corruption
