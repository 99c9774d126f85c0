// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kalbert/core/tensor.hpp"
#include "kalbert/model/params.hpp"
#include "kalbert/optim/lamb.hpp"
#include "kalbert/train/train_config.hpp"

namespace kalbert::train {

/// File layout: "KALC", u32 version, u64 header length, JSON header, then
/// raw little-endian tensor data. The header records the run config, step,
/// rng state and one (name, dtype, shape, offset, bytes) entry per tensor;
/// offsets count from the start of the data section.
namespace checkpoint_format {
inline constexpr char kMagic[4] = {'K', 'A', 'L', 'C'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::string_view kParamPrefix = "param/";
inline constexpr std::string_view kMomentPrefix = "lamb.m/";
inline constexpr std::string_view kVelocityPrefix = "lamb.v/";
}  // namespace checkpoint_format

template <Real T>
struct Checkpoint {
  TrainConfig config;
  std::uint64_t step = 0;
  std::string rng_state;
  model::ParameterSet<T> params;
  optim::LambState<T> optimizer;
};

struct TensorEntry {
  std::string name;
  DType dtype = DType::float32;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t bytes = 0;
};

/// Header fields, without tensor data.
struct CheckpointInfo {
  std::uint32_t version = 0;
  TrainConfig config;
  std::uint64_t step = 0;
  std::vector<TensorEntry> tensors;
};

template <Real T>
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint<T>& checkpoint);

template <Real T>
void save_checkpoint(const Checkpoint<T>& checkpoint, const std::filesystem::path& path);

/// Throws VersionMismatch, CorruptCheckpoint, MissingTensor, ShapeMismatch
/// or InvalidConfig (stored dtype differs from T).
template <Real T>
Checkpoint<T> decode_checkpoint(std::span<const std::uint8_t> bytes);

template <Real T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

}  // namespace kalbert::train
