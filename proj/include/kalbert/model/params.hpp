// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "kalbert/core/tensor.hpp"
#include "kalbert/model/config.hpp"

namespace kalbert::model {

/// Parameter names. Only one encoder layer exists, whatever num_layers is.
namespace names {
inline constexpr std::string_view kWordEmb = "embeddings.word";
inline constexpr std::string_view kPosEmb = "embeddings.position";
inline constexpr std::string_view kTypeEmb = "embeddings.token_type";
inline constexpr std::string_view kEmbNormGamma = "embeddings.norm.gamma";
inline constexpr std::string_view kEmbNormBeta = "embeddings.norm.beta";
inline constexpr std::string_view kEmbProjW = "embeddings.projection.weight";
inline constexpr std::string_view kEmbProjB = "embeddings.projection.bias";
inline constexpr std::string_view kQueryW = "encoder.attention.query.weight";
inline constexpr std::string_view kQueryB = "encoder.attention.query.bias";
inline constexpr std::string_view kKeyW = "encoder.attention.key.weight";
inline constexpr std::string_view kKeyB = "encoder.attention.key.bias";
inline constexpr std::string_view kValueW = "encoder.attention.value.weight";
inline constexpr std::string_view kValueB = "encoder.attention.value.bias";
inline constexpr std::string_view kAttnOutW = "encoder.attention.output.weight";
inline constexpr std::string_view kAttnOutB = "encoder.attention.output.bias";
inline constexpr std::string_view kAttnNormGamma = "encoder.attention.norm.gamma";
inline constexpr std::string_view kAttnNormBeta = "encoder.attention.norm.beta";
inline constexpr std::string_view kFfnInW = "encoder.ffn.in.weight";
inline constexpr std::string_view kFfnInB = "encoder.ffn.in.bias";
inline constexpr std::string_view kFfnOutW = "encoder.ffn.out.weight";
inline constexpr std::string_view kFfnOutB = "encoder.ffn.out.bias";
inline constexpr std::string_view kFfnNormGamma = "encoder.ffn.norm.gamma";
inline constexpr std::string_view kFfnNormBeta = "encoder.ffn.norm.beta";
inline constexpr std::string_view kPoolerW = "pooler.weight";
inline constexpr std::string_view kPoolerB = "pooler.bias";
inline constexpr std::string_view kMlmTransformW = "heads.mlm.transform.weight";
inline constexpr std::string_view kMlmTransformB = "heads.mlm.transform.bias";
inline constexpr std::string_view kMlmNormGamma = "heads.mlm.norm.gamma";
inline constexpr std::string_view kMlmNormBeta = "heads.mlm.norm.beta";
inline constexpr std::string_view kMlmDecoderBias = "heads.mlm.decoder_bias";
inline constexpr std::string_view kSopW = "heads.sop.weight";
inline constexpr std::string_view kSopB = "heads.sop.bias";
inline constexpr std::string_view kWopW = "heads.wop.weight";
inline constexpr std::string_view kWopB = "heads.wop.bias";
}  // namespace names

enum class ParamKind { Weight, Bias, NormGamma, NormBeta };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamKind kind;
};

/// Every tensor the config needs, in a fixed order. Heads of disabled
/// objectives are omitted.
std::vector<ParamSpec> parameter_schema(const AlbertConfig& cfg);

/// Bias vectors and layer-norm parameters take no weight decay.
bool excluded_from_weight_decay(std::string_view name);

struct ParamCount {
  std::size_t embeddings = 0;
  std::size_t encoder = 0;
  std::size_t pooler = 0;
  std::size_t mlm_head = 0;
  std::size_t sop_head = 0;
  std::size_t wop_head = 0;

  std::size_t backbone() const noexcept { return embeddings + encoder + pooler; }
  std::size_t heads() const noexcept { return mlm_head + sop_head + wop_head; }
  std::size_t total() const noexcept { return backbone() + heads(); }
};

/// Closed-form parameter count. The encoder term does not depend on
/// num_layers.
ParamCount count_params(const AlbertConfig& cfg);

/// Named tensors ordered by name.
template <Real T>
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor<T>, std::less<>>;

  ParameterSet() = default;
  explicit ParameterSet(Map tensors) : tensors_(std::move(tensors)) {}

  const Tensor<T>& get(std::string_view name) const;
  Tensor<T>& get(std::string_view name);
  bool contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }
  void set(std::string name, Tensor<T> value) { tensors_.insert_or_assign(std::move(name), std::move(value)); }

  const Map& tensors() const noexcept { return tensors_; }
  Map& tensors() noexcept { return tensors_; }
  std::size_t num_tensors() const noexcept { return tensors_.size(); }
  std::size_t num_elements() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) { return a.tensors_ == b.tensors_; }

 private:
  Map tensors_;
};

/// Truncated normal(0, init_std) weights (redrawn beyond two standard
/// deviations), zero biases, unit gammas. Each tensor draws from its own
/// stream keyed by (seed, name), so shared tensors initialize identically
/// whichever heads are enabled.
template <Real T>
ParameterSet<T> init_params(const AlbertConfig& cfg, std::uint64_t seed);

/// Checks that params hold exactly the schema's tensors and shapes.
/// Throws MissingTensor or ShapeMismatch.
template <Real T>
void check_schema(const ParameterSet<T>& params, const AlbertConfig& cfg);

}  // namespace kalbert::model
