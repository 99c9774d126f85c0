// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kalbert/text/tokenizer.hpp"
#include "kalbert/text/vocab.hpp"

namespace kalbert::data {

inline constexpr std::size_t kMinSeqLen = 8;

struct Document {
  std::string id;
  std::vector<std::string> sentences;
};

/// Two consecutive sentences of one document; b directly follows a.
struct SegmentPair {
  text::TokenSeq a;
  text::TokenSeq b;
  std::string doc_id;
  std::size_t a_index = 0;
};

/// [CLS] X [SEP] Y [SEP] [PAD]... with word spans in absolute positions.
struct PackedInput {
  std::vector<text::TokenId> input_ids;
  std::vector<std::int32_t> token_type_ids;
  std::vector<std::uint8_t> attention_mask;
  std::vector<text::WordSpan> word_spans;

  std::size_t seq_len() const noexcept { return input_ids.size(); }
};

/// Splits file content into documents: blank lines separate documents,
/// every other line is one normalized sentence.
std::vector<Document> parse_documents(std::string_view content, std::string_view source);

/// Reads files in lexicographic path order. Throws IoError / InvalidUtf8.
std::vector<Document> ingest(std::span<const std::filesystem::path> files);

/// Encodes every sentence and pairs each with its successor.
std::vector<SegmentPair> make_segment_pairs(const Document& doc, const text::Vocab& vocab, std::size_t seq_len);

/// Packs a pair, (A, B) or (B, A) when swapped. Overflow is trimmed before
/// the swap by dropping whole trailing words from the longer segment (B on
/// ties). Throws SegmentEmptyAfterTruncation if a segment runs out of words.
PackedInput pack_pair(const SegmentPair& pair, bool swap, std::size_t seq_len);

}  // namespace kalbert::data
