// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/train/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

namespace kalbert::train {
namespace {

using namespace checkpoint_format;

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  std::uint8_t raw[sizeof(U)];
  std::memcpy(raw, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
  out.insert(out.end(), raw, raw + sizeof(U));
}

template <typename U>
U get_le(const std::uint8_t* in) {
  std::uint8_t raw[sizeof(U)];
  std::memcpy(raw, in, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
  U value;
  std::memcpy(&value, raw, sizeof(U));
  return value;
}

[[noreturn]] void corrupt(const std::string& what) { fail(ErrorCode::CorruptCheckpoint, what); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open checkpoint " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct Parsed {
  CheckpointInfo info;
  std::string rng_state;
  std::uint64_t optimizer_step = 0;
  std::span<const std::uint8_t> data;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kPrefix = 4 + 4 + 8;
  if (bytes.size() < kPrefix) corrupt("file too short for a checkpoint header");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) corrupt("bad magic");
  Parsed p;
  p.info.version = get_le<std::uint32_t>(bytes.data() + 4);
  if (p.info.version != kVersion) {
    fail(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(p.info.version) + ", expected " +
                                         std::to_string(kVersion));
  }
  const auto header_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - kPrefix) corrupt("header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPrefix, bytes.begin() + kPrefix + header_len);
    p.info.step = header.at("step").get<std::uint64_t>();
    p.rng_state = header.at("rng_state").get<std::string>();
    p.optimizer_step = header.at("optimizer_step").get<std::uint64_t>();
    for (const auto& t : header.at("tensors")) {
      TensorEntry e;
      e.name = t.at("name").get<std::string>();
      e.dtype = parse_dtype(t.at("dtype").get<std::string>());
      e.shape = t.at("shape").get<Shape>();
      e.offset = t.at("offset").get<std::uint64_t>();
      e.bytes = t.at("bytes").get<std::uint64_t>();
      p.info.tensors.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("unreadable header: ") + e.what());
  } catch (const Error& e) {
    corrupt(std::string("unreadable header: ") + e.what());
  }
  p.info.config = train_config_from_json(header.at("config"));
  p.data = bytes.subspan(kPrefix + header_len);

  std::uint64_t expected = 0;
  for (const auto& e : p.info.tensors) {
    if (e.offset != expected) corrupt("tensor '" + e.name + "' offset is inconsistent");
    if (e.bytes != shape_numel(e.shape) * dtype_size(e.dtype)) corrupt("tensor '" + e.name + "' byte count mismatch");
    expected += e.bytes;
  }
  if (expected != p.data.size()) {
    corrupt("data section holds " + std::to_string(p.data.size()) + " bytes, header describes " +
            std::to_string(expected));
  }
  return p;
}

template <Real T>
Tensor<T> read_tensor(const Parsed& p, const TensorEntry& e) {
  if (e.dtype != dtype_of<T>()) {
    fail(ErrorCode::InvalidConfig,
         "tensor '" + e.name + "' is stored as " + std::string(to_string(e.dtype)) + ", requested " +
             std::string(to_string(dtype_of<T>())));
  }
  Tensor<T> t(e.shape);
  const std::uint8_t* src = p.data.data() + e.offset;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_le<T>(src + i * sizeof(T));
  return t;
}

template <Real T>
void write_group(const optim::TensorMap<T>& tensors, std::string_view prefix, nlohmann::json& entries,
                 std::vector<std::uint8_t>& data) {
  for (const auto& [name, t] : tensors) {
    const std::uint64_t bytes = t.size() * sizeof(T);
    entries.push_back({{"name", std::string(prefix) + name},
                       {"dtype", std::string(to_string(dtype_of<T>()))},
                       {"shape", t.shape()},
                       {"offset", data.size()},
                       {"bytes", bytes}});
    for (const T v : t.data()) put_le(data, v);
  }
}

}  // namespace

template <Real T>
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint<T>& c) {
  nlohmann::json entries = nlohmann::json::array();
  std::vector<std::uint8_t> data;
  write_group(c.params.tensors(), kParamPrefix, entries, data);
  write_group(c.optimizer.m, kMomentPrefix, entries, data);
  write_group(c.optimizer.v, kVelocityPrefix, entries, data);
  const nlohmann::json header = {{"format", "kalbert-checkpoint"},
                                 {"config", to_json(c.config)},
                                 {"step", c.step},
                                 {"rng_state", c.rng_state},
                                 {"optimizer_step", c.optimizer.step},
                                 {"tensors", std::move(entries)}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

template <Real T>
void save_checkpoint(const Checkpoint<T>& checkpoint, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <Real T>
Checkpoint<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const Parsed p = parse(bytes);
  Checkpoint<T> c;
  c.config = p.info.config;
  c.step = p.info.step;
  c.rng_state = p.rng_state;
  c.optimizer.step = p.optimizer_step;
  typename model::ParameterSet<T>::Map params;
  for (const auto& e : p.info.tensors) {
    const std::string_view name(e.name);
    if (name.starts_with(kParamPrefix)) {
      Tensor<T> t = read_tensor<T>(p, e);
      t.set_requires_grad(true);
      params.emplace(std::string(name.substr(kParamPrefix.size())), std::move(t));
    } else if (name.starts_with(kMomentPrefix)) {
      c.optimizer.m.emplace(std::string(name.substr(kMomentPrefix.size())), read_tensor<T>(p, e));
    } else if (name.starts_with(kVelocityPrefix)) {
      c.optimizer.v.emplace(std::string(name.substr(kVelocityPrefix.size())), read_tensor<T>(p, e));
    } else {
      corrupt("unknown tensor group in '" + e.name + "'");
    }
  }
  c.params = model::ParameterSet<T>(std::move(params));
  model::check_schema(c.params, c.config.model);
  for (const auto& [name, t] : c.params.tensors()) {
    for (const auto* group : {&c.optimizer.m, &c.optimizer.v}) {
      const auto it = group->find(name);
      if (it == group->end()) fail(ErrorCode::MissingTensor, "optimizer state missing for '" + name + "'");
      if (it->second.shape() != t.shape()) corrupt("optimizer state shape mismatch for '" + name + "'");
    }
  }
  if (c.optimizer.m.size() != c.params.num_tensors() || c.optimizer.v.size() != c.params.num_tensors()) {
    corrupt("optimizer state holds tensors outside the parameter set");
  }
  return c;
}

template <Real T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint<T>(bytes);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse(bytes).info;
}

#define KALBERT_INSTANTIATE(T)                                                             \
  template std::vector<std::uint8_t> encode_checkpoint<T>(const Checkpoint<T>&);          \
  template void save_checkpoint<T>(const Checkpoint<T>&, const std::filesystem::path&);   \
  template Checkpoint<T> decode_checkpoint<T>(std::span<const std::uint8_t>);             \
  template Checkpoint<T> load_checkpoint<T>(const std::filesystem::path&);

KALBERT_INSTANTIATE(float)
KALBERT_INSTANTIATE(double)

#undef KALBERT_INSTANTIATE

}  // namespace kalbert::train
