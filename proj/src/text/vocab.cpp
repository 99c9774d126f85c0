// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/text/vocab.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kalbert/core/error.hpp"
#include "kalbert/text/unicode.hpp"

namespace kalbert::text {
namespace {

constexpr std::string_view kFormat = "kalbert-vocab";
constexpr int kFormatVersion = 1;

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens, std::string continuation_marker, std::vector<Merge> merges)
    : tokens_(std::move(tokens)), marker_(std::move(continuation_marker)), merges_(std::move(merges)) {
  if (marker_.empty()) fail(ErrorCode::InvalidVocabFile, "continuation marker must be non-empty");
  if (tokens_.size() < static_cast<std::size_t>(special::kCount)) {
    fail(ErrorCode::InvalidVocabFile, "vocabulary lacks the special tokens");
  }
  for (TokenId id = 0; id < special::kCount; ++id) {
    if (tokens_[static_cast<std::size_t>(id)] != special::kNames[static_cast<std::size_t>(id)]) {
      fail(ErrorCode::InvalidVocabFile, "id " + std::to_string(id) + " must be " +
                                            std::string(special::kNames[static_cast<std::size_t>(id)]));
    }
  }
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& tok = tokens_[i];
    if (tok.empty()) fail(ErrorCode::InvalidVocabFile, "empty token at id " + std::to_string(i));
    if (!is_valid_utf8(tok)) fail(ErrorCode::InvalidVocabFile, "token " + std::to_string(i) + " is not UTF-8");
    if (!ids_.emplace(tok, static_cast<TokenId>(i)).second) {
      fail(ErrorCode::InvalidVocabFile, "duplicate token '" + tok + "'");
    }
    max_token_chars_ = std::max(max_token_chars_, decode_utf8(tok).size());
  }
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    fail(ErrorCode::IdOutOfRange, "token id " + std::to_string(id) + " outside vocabulary of " +
                                      std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json specials = nlohmann::json::object();
  for (TokenId id = 0; id < special::kCount; ++id) {
    specials[std::string(special::kNames[static_cast<std::size_t>(id)])] = id;
  }
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [left, right] : merges_) merges.push_back({left, right});
  return {{"format", kFormat},        {"version", kFormatVersion}, {"continuation_marker", marker_},
          {"specials", specials},      {"tokens", tokens_},         {"merges", merges}};
}

Vocab Vocab::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kFormat) {
      fail(ErrorCode::InvalidVocabFile, "not a vocabulary file");
    }
    if (doc.at("version").get<int>() != kFormatVersion) {
      fail(ErrorCode::InvalidVocabFile, "unsupported vocabulary version");
    }
    const auto& specials = doc.at("specials");
    if (specials.size() != static_cast<std::size_t>(special::kCount)) {
      fail(ErrorCode::InvalidVocabFile, "expected exactly five special tokens");
    }
    for (TokenId id = 0; id < special::kCount; ++id) {
      const std::string name(special::kNames[static_cast<std::size_t>(id)]);
      if (!specials.contains(name) || specials.at(name).get<TokenId>() != id) {
        fail(ErrorCode::InvalidVocabFile, "special " + name + " must have id " + std::to_string(id));
      }
    }
    std::vector<Merge> merges;
    for (const auto& m : doc.value("merges", nlohmann::json::array())) {
      merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
    }
    return Vocab(doc.at("tokens").get<std::vector<std::string>>(),
                 doc.at("continuation_marker").get<std::string>(), std::move(merges));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidVocabFile, e.what());
  }
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << to_json().dump(1) << '\n';
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidVocabFile, path.string() + ": " + e.what());
  }
  return from_json(doc);
}

}  // namespace kalbert::text
