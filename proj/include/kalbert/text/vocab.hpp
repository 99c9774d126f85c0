// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace kalbert::text {

using TokenId = std::int32_t;

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kMask = 4;
inline constexpr TokenId kCount = 5;
inline constexpr std::array<std::string_view, kCount> kNames = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                                                  "[MASK]"};
}  // namespace special

inline constexpr std::string_view kDefaultContinuationMarker = "##";

/// Subword inventory. Ids are dense; ids 0..4 are the fixed specials.
/// Immutable after construction.
class Vocab {
 public:
  using Merge = std::pair<std::string, std::string>;

  /// tokens must start with the five special names in id order.
  explicit Vocab(std::vector<std::string> tokens,
                 std::string continuation_marker = std::string(kDefaultContinuationMarker),
                 std::vector<Merge> merges = {});

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& continuation_marker() const noexcept { return marker_; }
  const std::vector<Merge>& merges() const noexcept { return merges_; }

  /// Longest token, in code points (marker included), bounding match search.
  std::size_t max_token_chars() const noexcept { return max_token_chars_; }

  static bool is_special(TokenId id) noexcept { return id >= 0 && id < special::kCount; }
  bool is_continuation(std::string_view piece) const noexcept {
    return !marker_.empty() && piece.starts_with(marker_);
  }

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& doc);

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.tokens_ == b.tokens_ && a.marker_ == b.marker_ && a.merges_ == b.merges_;
  }

 private:
  std::vector<std::string> tokens_;
  std::string marker_;
  std::vector<Merge> merges_;
  std::unordered_map<std::string, TokenId> ids_;
  std::size_t max_token_chars_ = 0;
};

}  // namespace kalbert::text
