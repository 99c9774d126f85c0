// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kalbert/core/error.hpp"
#include "kalbert/core/rng.hpp"
#include "kalbert/text/tokenizer.hpp"
#include "kalbert/text/unicode.hpp"
#include "kalbert/text/vocab.hpp"
#include "support.hpp"

using namespace kalbert;
using namespace kalbert::text;
using kalbert::testing::error_of;

namespace {

std::vector<std::string> with_specials(std::vector<std::string> extra) {
  std::vector<std::string> tokens(special::kNames.begin(), special::kNames.end());
  tokens.insert(tokens.end(), extra.begin(), extra.end());
  return tokens;
}

}  // namespace

TEST_CASE("utf8 decode and encode round trip") {
  const std::string s = "한국어 abc";
  const auto cps = decode_utf8(s);
  CHECK(cps.size() == 7);
  CHECK(cps[0] == U'한');
  CHECK(encode_utf8(cps) == s);
  CHECK(is_valid_utf8(s));
  CHECK_FALSE(is_valid_utf8(std::string("\xC3\x28", 2)));
  CHECK_FALSE(is_valid_utf8(std::string("\xED\xA0\x80", 3)));
}

TEST_CASE("nfc composes conjoining jamo") {
  // U+1100 U+1161 composes to U+AC00.
  std::string decomposed;
  append_utf8(decomposed, 0x1100);
  append_utf8(decomposed, 0x1161);
  std::string composed;
  append_utf8(composed, 0xAC00);
  CHECK(normalize_nfc(decomposed) == composed);
  CHECK(normalize_nfc(composed) == composed);
}

TEST_CASE("whitespace split and line normalization") {
  CHECK(split_whitespace("  a \t b\n c ") == std::vector<std::string>{"a", "b", "c"});
  CHECK(split_whitespace("").empty());
  CHECK(normalize_line("a \t b") == "a b");
  CHECK(normalize_line("   ").empty());
}

TEST_CASE("vocab construction validates specials and duplicates") {
  const Vocab v(with_specials({"a", "##b"}));
  CHECK(v.size() == 7);
  for (TokenId id = 0; id < special::kCount; ++id) CHECK(v.token(id) == special::kNames[id]);
  CHECK(v.find("##b") == TokenId{6});
  CHECK_FALSE(v.find("zz").has_value());
  CHECK(error_of([] { Vocab bad(with_specials({"a", "a"})); }) == ErrorCode::InvalidVocabFile);
  CHECK(error_of([] { Vocab bad(with_specials({"[MASK]"})); }) == ErrorCode::InvalidVocabFile);
  CHECK(error_of([] { Vocab bad({"[UNK]", "[PAD]", "[CLS]", "[SEP]", "[MASK]"}); }) ==
        ErrorCode::InvalidVocabFile);
  CHECK(error_of([&] { (void)v.token(7); }) == ErrorCode::IdOutOfRange);
}

TEST_CASE("vocab file round trip and rejection of reordered specials") {
  testing::TempDir dir("vocab");
  const Vocab v(with_specials({"a", "##b", "ab"}), "##", {{"a", "##b"}});
  v.save(dir / "v.json");
  CHECK(Vocab::load(dir / "v.json") == v);

  auto doc = v.to_json();
  CHECK(Vocab::from_json(doc) == v);
  auto tampered = doc.dump();
  const auto pos = tampered.find("\"[PAD]\":0");
  if (pos != std::string::npos) {
    tampered.replace(pos, 9, "\"[PAD]\":4");
    testing::write_text(dir / "bad.json", tampered);
    CHECK(error_of([&] { Vocab::load(dir / "bad.json"); }) == ErrorCode::InvalidVocabFile);
  }
  testing::write_text(dir / "junk.json", "{not json");
  CHECK(error_of([&] { Vocab::load(dir / "junk.json"); }) == ErrorCode::InvalidVocabFile);
  CHECK(error_of([&] { Vocab::load(dir / "missing.json"); }) == ErrorCode::IoError);
}

TEST_CASE("build_vocab first merge on a toy corpus") {
  const std::vector<std::string> corpus = {"ab ab ab"};
  // Alphabet {a, ##b} plus five specials; one slot for a merge.
  const Vocab v = build_vocab(corpus, 8);
  REQUIRE(!v.merges().empty());
  CHECK(v.merges().front() == Vocab::Merge{"a", "##b"});
  CHECK(v.contains("ab"));
  CHECK(v.size() == 8);
  for (TokenId id = 0; id < special::kCount; ++id) CHECK(v.token(id) == special::kNames[id]);
}

TEST_CASE("build_vocab rejects a target below the base inventory") {
  const std::vector<std::string> corpus = {"ab ab ab"};
  CHECK(error_of([&] { build_vocab(corpus, 6); }) == ErrorCode::VocabTooSmall);
  CHECK_NOTHROW(build_vocab(corpus, 7));
}

TEST_CASE("build_vocab stops when no pair repeats") {
  const std::vector<std::string> corpus = {"abc"};
  const Vocab v = build_vocab(corpus, 100);
  CHECK(v.merges().empty());
  CHECK(v.size() == 8);
}

TEST_CASE("build_vocab is deterministic and keeps specials first") {
  const std::string text = testing::synthetic_corpus(20, 7);
  std::vector<std::string> lines = split_whitespace("");
  std::string line;
  for (char c : text) {
    if (c == '\n') {
      if (!line.empty()) lines.push_back(line);
      line.clear();
    } else {
      line += c;
    }
  }
  const Vocab a = build_vocab(lines, 300);
  const Vocab b = build_vocab(lines, 300);
  CHECK(a == b);
  CHECK(a.size() <= 300);
  for (TokenId id = 0; id < special::kCount; ++id) CHECK(a.token(id) == special::kNames[id]);
  std::set<std::string> unique(a.tokens().begin(), a.tokens().end());
  CHECK(unique.size() == a.size());
}

TEST_CASE("encode examples") {
  const Vocab v(with_specials({"a", "b", "##b", "##c", "ab", "x", "##y"}));
  const TokenSeq empty = encode("", v);
  CHECK(empty.empty());
  CHECK(empty.word_spans.empty());

  const TokenSeq abc = encode("abc", v);
  CHECK(abc.pieces == std::vector<std::string>{"ab", "##c"});
  CHECK(abc.word_spans == std::vector<WordSpan>{{0, 2}});

  const TokenSeq unk = encode("aq xy", v);
  CHECK(unk.pieces == std::vector<std::string>{"a", "##[UNK]", "x", "##y"});
  CHECK(unk.ids[1] == special::kUnk);
  CHECK(unk.word_spans == std::vector<WordSpan>{{0, 2}, {2, 4}});
}

TEST_CASE("decode examples") {
  const Vocab v(with_specials({"a", "b", "##b", "##c", "ab"}));
  CHECK(decode(std::vector<TokenId>{}, v).empty());
  CHECK(decode(std::vector<TokenId>{special::kMask}, v) == "[MASK]");
  const std::vector<TokenId> ids = {*v.find("ab"), *v.find("##c"), *v.find("b")};
  CHECK(decode(ids, v) == "abc b");
  CHECK(error_of([&] { decode(std::vector<TokenId>{99}, v); }) == ErrorCode::IdOutOfRange);
}

TEST_CASE("word_spans examples") {
  CHECK(word_spans(std::vector<std::string>{"ab", "##c", "xy"}) == std::vector<WordSpan>{{0, 2}, {2, 3}});
  CHECK(word_spans(std::vector<std::string>{"a", "##b", "##c"}) == std::vector<WordSpan>{{0, 3}});
  CHECK(word_spans(std::vector<std::string>{}).empty());
  CHECK(error_of([] { word_spans(std::vector<std::string>{"##a", "b"}); }) == ErrorCode::MalformedSequence);
}

TEST_CASE("encode output invariants and decode round trip") {
  const std::string text = testing::synthetic_corpus(30, 11);
  std::vector<std::string> lines;
  std::string line;
  for (char c : text) {
    if (c == '\n') {
      if (!line.empty()) lines.push_back(line);
      line.clear();
    } else {
      line += c;
    }
  }
  const Vocab v = build_vocab(lines, 400);
  for (const auto& l : lines) {
    const TokenSeq seq = encode(l, v);
    for (TokenId id : seq.ids) {
      CHECK(id >= 0);
      CHECK(static_cast<std::size_t>(id) < v.size());
      CHECK((id == special::kUnk || !Vocab::is_special(id)));
    }
    // Spans partition the sequence; only the first piece of a span is unmarked.
    std::size_t next = 0;
    for (const auto& span : seq.word_spans) {
      CHECK(span.begin == next);
      CHECK_FALSE(v.is_continuation(seq.pieces[span.begin]));
      for (std::size_t i = span.begin + 1; i < span.end; ++i) CHECK(v.is_continuation(seq.pieces[i]));
      next = span.end;
    }
    CHECK(next == seq.size());
    CHECK(decode(seq.ids, v) == normalize_line(l));
  }
}

TEST_CASE("round trip over random strings from the vocab alphabet") {
  const std::vector<std::string> corpus = {"가나 다라 가다 나라 라다가", "마 바사 가나다"};
  const Vocab v = build_vocab(corpus, 40);
  std::vector<std::string> initials;
  for (const auto& t : v.tokens()) {
    if (!t.starts_with("[") && !v.is_continuation(t) && decode_utf8(t).size() == 1) initials.push_back(t);
  }
  REQUIRE(!initials.empty());
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    const std::size_t words = 1 + rng.uniform_index(5);
    for (std::size_t w = 0; w < words; ++w) {
      if (w > 0) s += ' ';
      const std::size_t chars = 1 + rng.uniform_index(4);
      for (std::size_t c = 0; c < chars; ++c) {
        const auto& ch = initials[rng.uniform_index(initials.size())];
        // Continuation characters exist only for those seen mid-word.
        if (c > 0 && !v.contains("##" + ch)) continue;
        s += ch;
      }
    }
    const TokenSeq seq = encode(s, v);
    for (TokenId id : seq.ids) REQUIRE(id != special::kUnk);
    CHECK(decode(seq.ids, v) == s);
  }
}
