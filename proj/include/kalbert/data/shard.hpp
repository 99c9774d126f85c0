// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "kalbert/data/example.hpp"

namespace kalbert::data {

/// Random-access source of prepared examples.
class ExampleSource {
 public:
  virtual ~ExampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::size_t seq_len() const = 0;
  virtual CorruptedExample get(std::size_t index) const = 0;
};

class InMemoryExamples final : public ExampleSource {
 public:
  InMemoryExamples(std::vector<CorruptedExample> examples, std::size_t seq_len);

  std::size_t size() const override { return examples_.size(); }
  std::size_t seq_len() const override { return seq_len_; }
  CorruptedExample get(std::size_t index) const override;

  const std::vector<CorruptedExample>& examples() const noexcept { return examples_; }

 private:
  std::vector<CorruptedExample> examples_;
  std::size_t seq_len_;
};

/// Binary shard layout (all integers little-endian):
///   "KALB" | version u32 | seq_len u32 | count u32 | records...
/// Each record: input_ids, token_type_ids, attention_mask, mlm_labels,
/// wop_labels as u16[seq_len] (0xFFFF encodes -1 in label channels),
/// then sop_label u8.
namespace shard_format {
inline constexpr char kMagic[4] = {'K', 'A', 'L', 'B'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;
inline constexpr std::uint16_t kIgnoreWord = 0xFFFF;
inline constexpr std::size_t record_bytes(std::size_t seq_len) { return 10 * seq_len + 1; }
}  // namespace shard_format

void write_shard(const std::filesystem::path& path, std::span<const CorruptedExample> examples, std::size_t seq_len);

/// Serialized bytes of a shard (what write_shard puts on disk).
std::vector<std::uint8_t> encode_shard(std::span<const CorruptedExample> examples, std::size_t seq_len);

/// Reads records on demand. Throws CorruptShard on a bad header or a file
/// size that does not match the declared count.
class ShardReader final : public ExampleSource {
 public:
  explicit ShardReader(const std::filesystem::path& path);

  std::size_t size() const override { return count_; }
  std::size_t seq_len() const override { return seq_len_; }
  CorruptedExample get(std::size_t index) const override;

  /// Loads every record into memory.
  InMemoryExamples load_all() const;

 private:
  std::filesystem::path path_;
  mutable std::ifstream in_;
  std::size_t seq_len_ = 0;
  std::size_t count_ = 0;
};

}  // namespace kalbert::data
