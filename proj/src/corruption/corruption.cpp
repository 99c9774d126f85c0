// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/corruption/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kalbert/core/error.hpp"
#include "kalbert/text/vocab.hpp"

namespace kalbert::corruption {
namespace {

// Guards floor/ceil of rate * count against representation error
// (0.15 * 20 is 3.0000000000000004).
constexpr double kRateSlack = 1e-9;

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    fail(ErrorCode::InvalidProbability, std::string(name) + " = " + std::to_string(p) + " not in [0, 1]");
  }
}

template <typename Vec>
void shuffle(Vec& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(v[i - 1], v[j]);
  }
}

bool maskable(std::int32_t id, std::uint8_t attended) {
  return attended != 0 && !text::Vocab::is_special(id);
}

}  // namespace

void CorruptionConfig::validate() const {
  check_probability(mlm_rate, "mlm_rate");
  check_probability(mask_prob, "mask_prob");
  check_probability(random_prob, "random_prob");
  check_probability(keep_prob, "keep_prob");
  check_probability(p_wop, "p_wop");
  check_probability(wop_rate, "wop_rate");
  if (std::abs(mask_prob + random_prob + keep_prob - 1.0) > 1e-9) {
    fail(ErrorCode::InvalidConfig, "mask_prob + random_prob + keep_prob must equal 1");
  }
}

SopResult sop_with_order(const data::SegmentPair& pair, bool swap, std::size_t seq_len) {
  return SopResult{data::pack_pair(pair, swap, seq_len), swap ? 1 : 0};
}

SopResult apply_sop(const data::SegmentPair& pair, std::size_t seq_len, Rng& rng) {
  const bool swap = rng.bernoulli(0.5);
  return sop_with_order(pair, swap, seq_len);
}

MlmResult apply_mlm(std::span<const std::int32_t> input_ids, std::span<const std::uint8_t> attention_mask,
                    std::span<const text::WordSpan> word_spans, std::size_t vocab_size,
                    const CorruptionConfig& cfg, Rng& rng) {
  MlmResult result;
  result.input_ids.assign(input_ids.begin(), input_ids.end());
  result.labels.assign(input_ids.size(), data::kIgnore);
  if (!cfg.enable_mlm || cfg.mlm_rate == 0.0) return result;

  // Maskable pieces of each word; UNK pieces inside a word are left alone.
  std::vector<std::vector<std::size_t>> words;
  std::size_t maskable_count = 0;
  for (const auto& span : word_spans) {
    std::vector<std::size_t> positions;
    for (std::size_t p = span.begin; p < span.end && p < input_ids.size(); ++p) {
      if (maskable(input_ids[p], attention_mask[p])) positions.push_back(p);
    }
    maskable_count += positions.size();
    if (!positions.empty()) words.push_back(std::move(positions));
  }
  if (words.empty()) return result;

  const auto budget =
      static_cast<std::size_t>(std::ceil(cfg.mlm_rate * static_cast<double>(maskable_count) - kRateSlack));
  std::vector<std::size_t> order(words.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);

  std::vector<std::size_t> chosen;
  std::size_t selected = 0;
  for (const std::size_t w : order) {
    if (selected >= budget) break;
    if (selected + words[w].size() > budget) continue;
    chosen.push_back(w);
    selected += words[w].size();
  }
  if (chosen.empty()) chosen.push_back(order.front());

  const std::size_t random_range = vocab_size > static_cast<std::size_t>(text::special::kCount)
                                       ? vocab_size - static_cast<std::size_t>(text::special::kCount)
                                       : 0;
  for (const std::size_t w : chosen) {
    const double u = rng.uniform();
    MlmAction action = MlmAction::Keep;
    if (u < cfg.mask_prob) {
      action = MlmAction::Mask;
    } else if (u < cfg.mask_prob + cfg.random_prob && random_range > 0) {
      action = MlmAction::Random;
    }
    result.actions.push_back(action);
    for (const std::size_t p : words[w]) {
      result.labels[p] = input_ids[p];
      if (action == MlmAction::Mask) {
        result.input_ids[p] = text::special::kMask;
      } else if (action == MlmAction::Random) {
        result.input_ids[p] = static_cast<std::int32_t>(text::special::kCount + rng.uniform_index(random_range));
      }
    }
  }
  return result;
}

std::vector<bool> wop_eligible(std::span<const std::int32_t> input_ids, std::span<const std::uint8_t> attention_mask) {
  std::vector<bool> eligible(input_ids.size());
  for (std::size_t i = 0; i < input_ids.size(); ++i) eligible[i] = maskable(input_ids[i], attention_mask[i]);
  return eligible;
}

WopResult apply_wop(std::span<const std::int32_t> input_ids, std::span<const std::uint8_t> attention_mask,
                    const CorruptionConfig& cfg, Rng& rng) {
  WopResult result;
  result.input_ids.assign(input_ids.begin(), input_ids.end());
  result.labels.assign(input_ids.size(), data::kIgnore);
  if (!cfg.enable_wop) return result;
  result.selected = rng.bernoulli(cfg.p_wop);
  if (!result.selected) return result;

  const auto eligible = wop_eligible(input_ids, attention_mask);
  // span_of[i]: index of the maximal eligible run containing i.
  std::vector<std::size_t> positions;
  std::vector<std::size_t> span_of(input_ids.size(), 0);
  std::size_t span_id = 0;
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    if (!eligible[i]) continue;
    if (i == 0 || !eligible[i - 1]) ++span_id;
    span_of[i] = span_id;
    positions.push_back(i);
  }
  const auto k = static_cast<std::size_t>(std::floor(cfg.wop_rate * static_cast<double>(positions.size()) + kRateSlack));
  if (k < 2) return result;

  // Partial Fisher-Yates: the first k entries are a uniform sample.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(positions.size() - i);
    std::swap(positions[i], positions[j]);
  }
  std::vector<std::size_t> sample(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(sample.begin(), sample.end());

  std::size_t begin = 0;
  while (begin < sample.size()) {
    std::size_t end = begin;
    while (end < sample.size() && span_of[sample[end]] == span_of[sample[begin]]) ++end;
    const std::size_t m = end - begin;
    if (m >= 2) {
      std::vector<std::size_t> perm(m);
      bool deranged = false;
      while (!deranged) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        shuffle(perm, rng);
        deranged = true;
        for (std::size_t i = 0; i < m; ++i) deranged = deranged && perm[i] != i;
      }
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t dst = sample[begin + i];
        const std::size_t src = sample[begin + perm[i]];
        result.input_ids[dst] = input_ids[src];
        result.labels[dst] = static_cast<std::int32_t>(src);
      }
    }
    begin = end;
  }
  return result;
}

std::uint64_t example_seed(const CorruptionConfig& cfg, std::uint64_t example_index) {
  return derive_seed(cfg.seed, example_index);
}

data::CorruptedExample build_example(const data::SegmentPair& pair, std::size_t vocab_size, std::size_t seq_len,
                                     const CorruptionConfig& cfg, std::uint64_t example_index,
                                     ExampleTrace* trace) {
  Rng rng(example_seed(cfg, example_index));
  SopResult sop = cfg.enable_sop ? apply_sop(pair, seq_len, rng) : sop_with_order(pair, false, seq_len);
  MlmResult mlm = apply_mlm(sop.packed.input_ids, sop.packed.attention_mask, sop.packed.word_spans, vocab_size,
                            cfg, rng);
  WopResult wop = apply_wop(mlm.input_ids, sop.packed.attention_mask, cfg, rng);

  data::CorruptedExample ex;
  ex.input_ids = std::move(wop.input_ids);
  ex.token_type_ids = sop.packed.token_type_ids;
  ex.attention_mask = sop.packed.attention_mask;
  ex.mlm_labels = std::move(mlm.labels);
  ex.sop_label = sop.label;
  ex.wop_labels = std::move(wop.labels);
  if (trace != nullptr) {
    trace->post_mlm_ids = std::move(mlm.input_ids);
    trace->mlm_actions = std::move(mlm.actions);
    trace->wop_selected = wop.selected;
    trace->packed = std::move(sop.packed);
  }
  return ex;
}

double PrepareStats::masked_fraction() const {
  return maskable_tokens == 0 ? 0.0 : static_cast<double>(mlm_selected_tokens) / static_cast<double>(maskable_tokens);
}

double PrepareStats::wop_fraction() const {
  return examples == 0 ? 0.0 : static_cast<double>(wop_selected) / static_cast<double>(examples);
}

double PrepareStats::wop_moved_fraction() const {
  return examples == 0 ? 0.0 : static_cast<double>(wop_examples) / static_cast<double>(examples);
}

PreparedExamples prepare_examples(std::span<const data::SegmentPair> pairs, std::size_t vocab_size,
                                  std::size_t seq_len, const CorruptionConfig& cfg) {
  cfg.validate();
  PreparedExamples out;
  auto& stats = out.stats;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ExampleTrace trace;
    data::CorruptedExample ex;
    try {
      ex = build_example(pairs[i], vocab_size, seq_len, cfg, i, &trace);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SegmentEmptyAfterTruncation) throw;
      ++stats.skipped_pairs;
      continue;
    }
    for (std::size_t p = 0; p < ex.seq_len(); ++p) {
      if (maskable(trace.packed.input_ids[p], ex.attention_mask[p])) ++stats.maskable_tokens;
      if (ex.mlm_labels[p] != data::kIgnore) ++stats.mlm_selected_tokens;
      if (ex.wop_labels[p] != data::kIgnore) ++stats.wop_moved_tokens;
    }
    const auto eligible = wop_eligible(trace.post_mlm_ids, ex.attention_mask);
    stats.wop_eligible_tokens += static_cast<std::size_t>(std::count(eligible.begin(), eligible.end(), true));
    for (const auto action : trace.mlm_actions) {
      ++stats.mlm_words;
      if (action == MlmAction::Mask) ++stats.mlm_mask_words;
      if (action == MlmAction::Random) ++stats.mlm_random_words;
      if (action == MlmAction::Keep) ++stats.mlm_keep_words;
    }
    if (std::any_of(ex.wop_labels.begin(), ex.wop_labels.end(), [](auto v) { return v != data::kIgnore; })) {
      ++stats.wop_examples;
    }
    if (trace.wop_selected) ++stats.wop_selected;
    stats.swapped += static_cast<std::size_t>(ex.sop_label);
    out.examples.push_back(std::move(ex));
  }
  stats.examples = out.examples.size();
  return out;
}

}  // namespace kalbert::corruption
