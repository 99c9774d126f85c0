// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/data/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "kalbert/core/error.hpp"
#include "kalbert/text/unicode.hpp"

namespace kalbert::data {
namespace {

void require_seq_len(std::size_t seq_len) {
  if (seq_len < kMinSeqLen) {
    fail(ErrorCode::InvalidConfig, "seq_len " + std::to_string(seq_len) + " below minimum " +
                                       std::to_string(kMinSeqLen));
  }
}

// Removes the final whole word of a segment.
void drop_last_word(text::TokenSeq& seq) {
  if (seq.word_spans.empty()) {
    fail(ErrorCode::SegmentEmptyAfterTruncation, "segment has no words left to remove");
  }
  const std::size_t cut = seq.word_spans.back().begin;
  seq.word_spans.pop_back();
  seq.ids.resize(cut);
  seq.pieces.resize(cut);
  if (seq.ids.empty()) fail(ErrorCode::SegmentEmptyAfterTruncation, "segment emptied by truncation");
}

}  // namespace

std::vector<Document> parse_documents(std::string_view content, std::string_view source) {
  std::vector<Document> docs;
  Document current;
  auto flush = [&] {
    if (!current.sentences.empty()) {
      current.id = std::string(source) + "#" + std::to_string(docs.size());
      docs.push_back(std::move(current));
    }
    current = Document{};
  };
  std::size_t pos = 0;
  while (pos <= content.size()) {
    const std::size_t nl = content.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? content.size() : nl;
    const std::string line = text::normalize_line(content.substr(pos, end - pos));
    if (line.empty()) {
      flush();
    } else {
      current.sentences.push_back(line);
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  flush();
  return docs;
}

std::vector<Document> ingest(std::span<const std::filesystem::path> files) {
  std::vector<std::filesystem::path> ordered(files.begin(), files.end());
  std::sort(ordered.begin(), ordered.end());
  std::vector<Document> docs;
  for (const auto& path : ordered) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) fail(ErrorCode::IoError, "read failed for " + path.string());
    const std::string content = buffer.str();
    if (!text::is_valid_utf8(content)) fail(ErrorCode::InvalidUtf8, path.string() + " is not valid UTF-8");
    auto parsed = parse_documents(content, path.string());
    std::move(parsed.begin(), parsed.end(), std::back_inserter(docs));
  }
  return docs;
}

std::vector<SegmentPair> make_segment_pairs(const Document& doc, const text::Vocab& vocab, std::size_t seq_len) {
  require_seq_len(seq_len);
  std::vector<SegmentPair> pairs;
  if (doc.sentences.size() < 2) return pairs;
  std::vector<text::TokenSeq> encoded;
  encoded.reserve(doc.sentences.size());
  for (const auto& s : doc.sentences) encoded.push_back(text::encode(s, vocab));
  for (std::size_t i = 0; i + 1 < encoded.size(); ++i) {
    pairs.push_back(SegmentPair{encoded[i], encoded[i + 1], doc.id, i});
  }
  return pairs;
}

PackedInput pack_pair(const SegmentPair& pair, bool swap, std::size_t seq_len) {
  require_seq_len(seq_len);
  if (pair.a.empty() || pair.b.empty()) {
    fail(ErrorCode::SegmentEmptyAfterTruncation, "segment pair with an empty side");
  }
  text::TokenSeq a = pair.a;
  text::TokenSeq b = pair.b;
  const std::size_t budget = seq_len - 3;
  while (a.size() + b.size() > budget) {
    drop_last_word(a.size() > b.size() ? a : b);
  }

  const text::TokenSeq& x = swap ? b : a;
  const text::TokenSeq& y = swap ? a : b;
  PackedInput out;
  out.input_ids.assign(seq_len, text::special::kPad);
  out.token_type_ids.assign(seq_len, 0);
  out.attention_mask.assign(seq_len, 0);

  std::size_t pos = 0;
  auto put = [&](text::TokenId id, std::int32_t type) {
    out.input_ids[pos] = id;
    out.token_type_ids[pos] = type;
    out.attention_mask[pos] = 1;
    ++pos;
  };
  auto put_segment = [&](const text::TokenSeq& seg, std::int32_t type) {
    const std::size_t offset = pos;
    for (const auto id : seg.ids) put(id, type);
    for (const auto& span : seg.word_spans) {
      out.word_spans.push_back(text::WordSpan{span.begin + offset, span.end + offset});
    }
  };
  put(text::special::kCls, 0);
  put_segment(x, 0);
  put(text::special::kSep, 0);
  put_segment(y, 1);
  put(text::special::kSep, 1);
  return out;
}

}  // namespace kalbert::data
