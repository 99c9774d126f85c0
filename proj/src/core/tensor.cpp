// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/core/tensor.hpp"

namespace kalbert {

std::string_view to_string(DType dtype) noexcept {
  return dtype == DType::float32 ? "float32" : "float64";
}

DType parse_dtype(std::string_view name) {
  if (name == "float32") return DType::float32;
  if (name == "float64") return DType::float64;
  fail(ErrorCode::InvalidConfig, "unknown dtype '" + std::string(name) + "'");
}

std::size_t dtype_size(DType dtype) noexcept { return dtype == DType::float32 ? 4 : 8; }

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

}  // namespace kalbert
