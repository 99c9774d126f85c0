// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kalbert/text/vocab.hpp"

namespace kalbert::text {

/// Half-open token index range [begin, end) covering one source word.
struct WordSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

struct TokenSeq {
  std::vector<TokenId> ids;
  std::vector<std::string> pieces;
  std::vector<WordSpan> word_spans;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
};

struct BpeOptions {
  std::string continuation_marker = std::string(kDefaultContinuationMarker);
};

/// Learns a byte-pair vocabulary over code points.
///
/// Words are whitespace-split after NFC. The base inventory holds every
/// word-initial character and every marker-prefixed continuation
/// character; merges then repeatedly fuse the most frequent adjacent pair
/// (ties: smallest merged string, then smallest left, then right) until
/// target_size tokens exist or no pair occurs at least twice.
/// Throws VocabTooSmall when target_size cannot hold the specials plus the
/// base inventory.
Vocab build_vocab(std::span<const std::string> corpus, std::size_t target_size, const BpeOptions& options = {});

/// Whitespace split, then greedy longest-match segmentation of each word.
/// A position with no matching piece emits UNK for one code point.
TokenSeq encode(std::string_view text, const Vocab& vocab);

/// Continuation pieces are glued to the preceding piece; words and
/// specials are joined by single spaces.
std::string decode(std::span<const TokenId> ids, const Vocab& vocab);

/// Maximal runs starting at an unmarked piece and continuing over marked
/// ones. Throws MalformedSequence when a marked piece has no word to extend.
std::vector<WordSpan> word_spans(std::span<const std::string> pieces,
                                 std::string_view marker = kDefaultContinuationMarker);

}  // namespace kalbert::text
