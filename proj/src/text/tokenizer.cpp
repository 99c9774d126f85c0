// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/text/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "kalbert/core/error.hpp"
#include "kalbert/text/unicode.hpp"

namespace kalbert::text {
namespace {

using PairKey = std::uint64_t;

PairKey pair_key(int left, int right) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) |
         static_cast<std::uint32_t>(right);
}

struct Candidate {
  std::int64_t count;
  std::string merged;
  std::string left;
  std::string right;
  PairKey key;

  bool operator<(const Candidate& o) const {
    if (count != o.count) return count > o.count;
    if (merged != o.merged) return merged < o.merged;
    if (left != o.left) return left < o.left;
    return right < o.right;
  }
};

struct Word {
  std::vector<int> symbols;
  std::int64_t count = 0;
};

class BpeLearner {
 public:
  BpeLearner(std::string marker) : marker_(std::move(marker)) {}

  int intern(const std::string& s) {
    const auto [it, inserted] = symbol_ids_.emplace(s, static_cast<int>(symbols_.size()));
    if (inserted) symbols_.push_back(s);
    return it->second;
  }

  void add_word(const std::string& word, std::int64_t count) {
    const auto cps = decode_utf8(word);
    Word w;
    w.count = count;
    for (std::size_t i = 0; i < cps.size(); ++i) {
      std::string sym = i == 0 ? std::string() : marker_;
      append_utf8(sym, cps[i]);
      w.symbols.push_back(intern(sym));
    }
    words_.push_back(std::move(w));
  }

  std::vector<std::string> alphabet() const {
    std::vector<std::string> out = symbols_;
    std::sort(out.begin(), out.end());
    return out;
  }

  Vocab run(std::size_t target_size) {
    std::vector<std::string> tokens;
    for (auto name : special::kNames) tokens.emplace_back(name);
    const auto base = alphabet();
    if (target_size < tokens.size() + base.size()) {
      fail(ErrorCode::VocabTooSmall, "target size " + std::to_string(target_size) + " below " +
                                         std::to_string(tokens.size() + base.size()) +
                                         " (specials plus base symbols)");
    }
    std::unordered_set<std::string> present;
    for (const auto& t : base) {
      tokens.push_back(t);
      present.insert(t);
    }

    for (std::size_t w = 0; w < words_.size(); ++w) update_word(w, +1);

    std::vector<Vocab::Merge> merges;
    while (tokens.size() < target_size && !queue_.empty()) {
      const Candidate best = *queue_.begin();
      if (best.count < 2) break;
      if (forbidden(best)) {
        banned_.insert(best.key);
        queue_.erase(queue_.begin());
        continue;
      }
      const int left = static_cast<int>(best.key >> 32);
      const int right = static_cast<int>(best.key & 0xFFFFFFFFu);
      const int merged = intern(best.merged);
      merges.emplace_back(best.left, best.right);
      if (present.insert(best.merged).second) tokens.push_back(best.merged);
      apply_merge(best.key, left, right, merged);
    }
    return Vocab(std::move(tokens), marker_, std::move(merges));
  }

 private:
  bool forbidden(const Candidate& c) const {
    for (auto name : special::kNames) {
      if (c.merged == name) return true;
    }
    // A word-initial piece must never look like a continuation piece.
    const bool left_initial = !c.left.starts_with(marker_);
    return left_initial && c.merged.starts_with(marker_);
  }

  std::string merged_string(int left, int right) const {
    return symbols_[static_cast<std::size_t>(left)] + symbols_[static_cast<std::size_t>(right)].substr(marker_.size());
  }

  void change_count(int left, int right, std::int64_t delta) {
    const PairKey key = pair_key(left, right);
    auto& count = counts_[key];
    if (count > 0 && !banned_.contains(key)) queue_.erase(make_candidate(key, count, left, right));
    count += delta;
    if (count > 0 && !banned_.contains(key)) queue_.insert(make_candidate(key, count, left, right));
  }

  Candidate make_candidate(PairKey key, std::int64_t count, int left, int right) const {
    return Candidate{count, merged_string(left, right), symbols_[static_cast<std::size_t>(left)],
                     symbols_[static_cast<std::size_t>(right)], key};
  }

  void update_word(std::size_t w, int sign) {
    const Word& word = words_[w];
    for (std::size_t i = 0; i + 1 < word.symbols.size(); ++i) {
      change_count(word.symbols[i], word.symbols[i + 1], sign * word.count);
      if (sign > 0) occurrences_[pair_key(word.symbols[i], word.symbols[i + 1])].push_back(w);
    }
  }

  void apply_merge(PairKey key, int left, int right, int merged) {
    auto affected = std::move(occurrences_[key]);
    occurrences_.erase(key);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    for (const std::size_t w : affected) {
      auto& syms = words_[w].symbols;
      bool contains = false;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        if (syms[i] == left && syms[i + 1] == right) contains = true;
      }
      if (!contains) continue;
      update_word(w, -1);
      std::vector<int> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
      update_word(w, +1);
    }
  }

  std::string marker_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> symbol_ids_;
  std::vector<Word> words_;
  std::unordered_map<PairKey, std::int64_t> counts_;
  std::unordered_map<PairKey, std::vector<std::size_t>> occurrences_;
  std::unordered_set<PairKey> banned_;
  std::set<Candidate> queue_;
};

}  // namespace

Vocab build_vocab(std::span<const std::string> corpus, std::size_t target_size, const BpeOptions& options) {
  if (options.continuation_marker.empty()) fail(ErrorCode::InvalidConfig, "continuation marker is empty");
  std::map<std::string, std::int64_t> word_counts;
  for (const auto& line : corpus) {
    for (auto& word : split_whitespace(normalize_nfc(line))) ++word_counts[std::move(word)];
  }
  BpeLearner learner(options.continuation_marker);
  for (const auto& [word, count] : word_counts) learner.add_word(word, count);
  return learner.run(target_size);
}

TokenSeq encode(std::string_view text, const Vocab& vocab) {
  TokenSeq seq;
  const std::string& marker = vocab.continuation_marker();
  const std::size_t max_chars = vocab.max_token_chars();
  for (const auto& word : split_whitespace(normalize_nfc(text))) {
    const auto cps = decode_utf8(word);
    const std::size_t first = seq.ids.size();
    std::size_t start = 0;
    while (start < cps.size()) {
      const std::string prefix = start == 0 ? std::string() : marker;
      std::size_t end = std::min(cps.size(), start + max_chars);
      bool matched = false;
      for (; end > start; --end) {
        const std::string candidate = prefix + encode_utf8(std::u32string_view(cps).substr(start, end - start));
        if (const auto id = vocab.find(candidate)) {
          seq.ids.push_back(*id);
          seq.pieces.push_back(candidate);
          matched = true;
          break;
        }
      }
      if (matched) {
        start = end;
      } else {
        seq.ids.push_back(special::kUnk);
        seq.pieces.push_back(prefix + std::string(special::kNames[special::kUnk]));
        ++start;
      }
    }
    seq.word_spans.push_back(WordSpan{first, seq.ids.size()});
  }
  return seq;
}

std::string decode(std::span<const TokenId> ids, const Vocab& vocab) {
  std::string out;
  bool in_word = false;
  for (const TokenId id : ids) {
    const std::string& piece = vocab.token(id);
    if (Vocab::is_special(id)) {
      if (!out.empty()) out.push_back(' ');
      out += piece;
      in_word = false;
    } else if (in_word && vocab.is_continuation(piece)) {
      out.append(piece, vocab.continuation_marker().size());
    } else {
      if (!out.empty()) out.push_back(' ');
      out += vocab.is_continuation(piece) ? piece.substr(vocab.continuation_marker().size()) : piece;
      in_word = true;
    }
  }
  return out;
}

std::vector<WordSpan> word_spans(std::span<const std::string> pieces, std::string_view marker) {
  std::vector<WordSpan> spans;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const bool continuation = !marker.empty() && std::string_view(pieces[i]).starts_with(marker);
    if (continuation) {
      if (spans.empty()) {
        fail(ErrorCode::MalformedSequence, "continuation piece '" + pieces[i] + "' at word-initial position " +
                                               std::to_string(i));
      }
      spans.back().end = i + 1;
    } else {
      spans.push_back(WordSpan{i, i + 1});
    }
  }
  return spans;
}

}  // namespace kalbert::text
