// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the test binaries.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "kalbert/core/error.hpp"
#include "kalbert/core/rng.hpp"
#include "kalbert/core/tape.hpp"
#include "kalbert/core/tensor.hpp"
#include "kalbert/corruption/corruption.hpp"
#include "kalbert/data/corpus.hpp"
#include "kalbert/model/config.hpp"
#include "kalbert/text/unicode.hpp"
#include "kalbert/text/vocab.hpp"

namespace kalbert::testing {

/// Runs fn and reports the ErrorCode it threw, or nullopt.
template <typename Fn>
std::optional<ErrorCode> error_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

template <Real T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>(rng.normal() * scale);
  return t;
}

/// Fresh scratch directory under the system temp path, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("kalbert-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Token sequence of random words over ids [5, vocab_size). Words hold 1 to
/// max_pieces pieces; continuation pieces are prefixed with "##".
inline text::TokenSeq random_segment(std::size_t words, std::size_t vocab_size, Rng& rng, std::size_t max_pieces = 3) {
  text::TokenSeq seq;
  for (std::size_t w = 0; w < words; ++w) {
    const std::size_t pieces = 1 + rng.uniform_index(max_pieces);
    const std::size_t begin = seq.ids.size();
    for (std::size_t p = 0; p < pieces; ++p) {
      const auto id = static_cast<text::TokenId>(text::special::kCount + rng.uniform_index(vocab_size - 5));
      seq.ids.push_back(id);
      seq.pieces.push_back((p == 0 ? "t" : "##t") + std::to_string(id));
    }
    seq.word_spans.push_back({begin, seq.ids.size()});
  }
  return seq;
}

/// Segment pairs whose two sides hold between min_words and max_words words.
inline std::vector<data::SegmentPair> random_pairs(std::size_t count, std::size_t vocab_size, std::uint64_t seed,
                                                   std::size_t min_words, std::size_t max_words,
                                                   std::size_t max_pieces = 3) {
  Rng rng(seed);
  std::vector<data::SegmentPair> pairs;
  for (std::size_t i = 0; i < count; ++i) {
    data::SegmentPair pair;
    pair.a = random_segment(min_words + rng.uniform_index(max_words - min_words + 1), vocab_size, rng, max_pieces);
    pair.b = random_segment(min_words + rng.uniform_index(max_words - min_words + 1), vocab_size, rng, max_pieces);
    pair.doc_id = "synthetic#" + std::to_string(i);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

/// Tiny model used across model and trainer tests.
inline model::AlbertConfig tiny_config(DType dtype = DType::float64) {
  model::AlbertConfig cfg;
  cfg.vocab_size = 50;
  cfg.embedding_size = 8;
  cfg.hidden_size = 16;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.ffn_size = 32;
  cfg.max_positions = 16;
  cfg.seq_len = 16;
  cfg.dtype = dtype;
  return cfg;
}

/// Corrupted examples for a config, built from random pairs.
inline std::vector<data::CorruptedExample> random_examples(const model::AlbertConfig& cfg, std::size_t count,
                                                           std::uint64_t seed,
                                                           corruption::CorruptionConfig corruption = {}) {
  const std::size_t max_words = std::max<std::size_t>(2, (cfg.seq_len - 3) / 4);
  const auto pairs = random_pairs(count, cfg.vocab_size, seed, 1, max_words, 2);
  corruption.seed = seed;
  return corruption::prepare_examples(pairs, cfg.vocab_size, cfg.seq_len, corruption).examples;
}

/// A small Korean-flavoured text corpus: documents separated by blank
/// lines, one sentence per line.
inline std::string synthetic_corpus(std::size_t documents, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> lexicon;
  for (int i = 0; i < 300; ++i) {
    std::string word;
    const std::size_t syllables = 1 + rng.uniform_index(3);
    for (std::size_t s = 0; s < syllables; ++s) {
      text::append_utf8(word, static_cast<char32_t>(0xAC00 + 28 * rng.uniform_index(40)));
    }
    lexicon.push_back(word);
  }
  std::string out;
  for (std::size_t d = 0; d < documents; ++d) {
    const std::size_t sentences = 2 + rng.uniform_index(5);
    for (std::size_t s = 0; s < sentences; ++s) {
      const std::size_t words = 4 + rng.uniform_index(10);
      for (std::size_t w = 0; w < words; ++w) {
        if (w > 0) out += ' ';
        out += lexicon[rng.uniform_index(lexicon.size())];
      }
      out += ".\n";
    }
    out += '\n';
  }
  return out;
}

}  // namespace kalbert::testing
