// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/data/shard.hpp"

#include <array>
#include <cstring>

#include "kalbert/core/error.hpp"

namespace kalbert::data {
namespace {

using namespace shard_format;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t to_word(std::int32_t v, bool label, const char* channel) {
  if (label && v == kIgnore) return kIgnoreWord;
  if (v < 0 || v >= static_cast<std::int32_t>(kIgnoreWord)) {
    fail(ErrorCode::TokenIdOutOfRange,
         std::string(channel) + " value " + std::to_string(v) + " does not fit the shard encoding");
  }
  return static_cast<std::uint16_t>(v);
}

std::int32_t from_word(std::uint16_t w, bool label) {
  if (label && w == kIgnoreWord) return kIgnore;
  return static_cast<std::int32_t>(w);
}

void check_example(const CorruptedExample& ex, std::size_t seq_len) {
  if (ex.input_ids.size() != seq_len || ex.token_type_ids.size() != seq_len ||
      ex.attention_mask.size() != seq_len || ex.mlm_labels.size() != seq_len || ex.wop_labels.size() != seq_len) {
    fail(ErrorCode::ShardMismatch, "example channels do not all have length " + std::to_string(seq_len));
  }
  if (ex.sop_label != 0 && ex.sop_label != 1) fail(ErrorCode::ShardMismatch, "sop_label must be 0 or 1");
}

}  // namespace

InMemoryExamples::InMemoryExamples(std::vector<CorruptedExample> examples, std::size_t seq_len)
    : examples_(std::move(examples)), seq_len_(seq_len) {
  for (const auto& ex : examples_) check_example(ex, seq_len_);
}

CorruptedExample InMemoryExamples::get(std::size_t index) const {
  if (index >= examples_.size()) {
    fail(ErrorCode::IndexOutOfRange, "example " + std::to_string(index) + " of " + std::to_string(examples_.size()));
  }
  return examples_[index];
}

std::vector<std::uint8_t> encode_shard(std::span<const CorruptedExample> examples, std::size_t seq_len) {
  if (seq_len == 0 || seq_len > 0xFFFFFFFFu || examples.size() > 0xFFFFFFFFu) {
    fail(ErrorCode::ShardMismatch, "shard dimensions out of range");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + examples.size() * record_bytes(seq_len));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(seq_len));
  put_u32(out, static_cast<std::uint32_t>(examples.size()));
  for (const auto& ex : examples) {
    check_example(ex, seq_len);
    for (auto v : ex.input_ids) put_u16(out, to_word(v, false, "input_ids"));
    for (auto v : ex.token_type_ids) put_u16(out, to_word(v, false, "token_type_ids"));
    for (auto v : ex.attention_mask) put_u16(out, v);
    for (auto v : ex.mlm_labels) put_u16(out, to_word(v, true, "mlm_labels"));
    for (auto v : ex.wop_labels) put_u16(out, to_word(v, true, "wop_labels"));
    out.push_back(static_cast<std::uint8_t>(ex.sop_label));
  }
  return out;
}

void write_shard(const std::filesystem::path& path, std::span<const CorruptedExample> examples,
                 std::size_t seq_len) {
  const auto bytes = encode_shard(examples, seq_len);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

ShardReader::ShardReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) fail(ErrorCode::IoError, "cannot read " + path.string());
  std::array<std::uint8_t, kHeaderBytes> header{};
  in_.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in_.gcount() != static_cast<std::streamsize>(header.size())) {
    fail(ErrorCode::CorruptShard, path.string() + ": truncated header");
  }
  if (std::memcmp(header.data(), kMagic, 4) != 0) fail(ErrorCode::CorruptShard, path.string() + ": bad magic");
  if (get_u32(header.data() + 4) != kVersion) {
    fail(ErrorCode::VersionMismatch, path.string() + ": unsupported shard version " +
                                         std::to_string(get_u32(header.data() + 4)));
  }
  seq_len_ = get_u32(header.data() + 8);
  count_ = get_u32(header.data() + 12);
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) fail(ErrorCode::IoError, path.string() + ": " + ec.message());
  if (seq_len_ == 0 || file_size != kHeaderBytes + count_ * record_bytes(seq_len_)) {
    fail(ErrorCode::CorruptShard, path.string() + ": size does not match " + std::to_string(count_) +
                                      " records of length " + std::to_string(seq_len_));
  }
}

CorruptedExample ShardReader::get(std::size_t index) const {
  if (index >= count_) {
    fail(ErrorCode::IndexOutOfRange, "example " + std::to_string(index) + " of " + std::to_string(count_));
  }
  const std::size_t rec = record_bytes(seq_len_);
  std::vector<std::uint8_t> buf(rec);
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(kHeaderBytes + index * rec));
  in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(rec));
  if (in_.gcount() != static_cast<std::streamsize>(rec)) fail(ErrorCode::CorruptShard, "short record read");

  CorruptedExample ex;
  const std::uint8_t* p = buf.data();
  auto read_channel = [&](std::vector<std::int32_t>& dst, bool label) {
    dst.resize(seq_len_);
    for (std::size_t i = 0; i < seq_len_; ++i, p += 2) dst[i] = from_word(get_u16(p), label);
  };
  read_channel(ex.input_ids, false);
  read_channel(ex.token_type_ids, false);
  ex.attention_mask.resize(seq_len_);
  for (std::size_t i = 0; i < seq_len_; ++i, p += 2) ex.attention_mask[i] = static_cast<std::uint8_t>(get_u16(p));
  read_channel(ex.mlm_labels, true);
  read_channel(ex.wop_labels, true);
  ex.sop_label = *p;
  return ex;
}

InMemoryExamples ShardReader::load_all() const {
  std::vector<CorruptedExample> all;
  all.reserve(count_);
  for (std::size_t i = 0; i < count_; ++i) all.push_back(get(i));
  return InMemoryExamples(std::move(all), seq_len_);
}

}  // namespace kalbert::data
