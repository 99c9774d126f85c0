// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/model/params.hpp"

#include "kalbert/core/rng.hpp"

namespace kalbert::model {
namespace {

std::uint64_t name_hash(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void add(std::vector<ParamSpec>& out, std::string_view name, Shape shape, ParamKind kind) {
  out.push_back(ParamSpec{std::string(name), std::move(shape), kind});
}

}  // namespace

std::vector<ParamSpec> parameter_schema(const AlbertConfig& cfg) {
  using namespace names;
  const std::size_t V = cfg.vocab_size, E = cfg.embedding_size, H = cfg.hidden_size, F = cfg.ffn_size,
                    P = cfg.max_positions;
  std::vector<ParamSpec> s;
  add(s, kWordEmb, {V, E}, ParamKind::Weight);
  add(s, kPosEmb, {P, E}, ParamKind::Weight);
  add(s, kTypeEmb, {cfg.type_vocab, E}, ParamKind::Weight);
  add(s, kEmbNormGamma, {E}, ParamKind::NormGamma);
  add(s, kEmbNormBeta, {E}, ParamKind::NormBeta);
  add(s, kEmbProjW, {E, H}, ParamKind::Weight);
  add(s, kEmbProjB, {H}, ParamKind::Bias);

  add(s, kQueryW, {H, H}, ParamKind::Weight);
  add(s, kQueryB, {H}, ParamKind::Bias);
  add(s, kKeyW, {H, H}, ParamKind::Weight);
  add(s, kKeyB, {H}, ParamKind::Bias);
  add(s, kValueW, {H, H}, ParamKind::Weight);
  add(s, kValueB, {H}, ParamKind::Bias);
  add(s, kAttnOutW, {H, H}, ParamKind::Weight);
  add(s, kAttnOutB, {H}, ParamKind::Bias);
  add(s, kAttnNormGamma, {H}, ParamKind::NormGamma);
  add(s, kAttnNormBeta, {H}, ParamKind::NormBeta);
  add(s, kFfnInW, {H, F}, ParamKind::Weight);
  add(s, kFfnInB, {F}, ParamKind::Bias);
  add(s, kFfnOutW, {F, H}, ParamKind::Weight);
  add(s, kFfnOutB, {H}, ParamKind::Bias);
  add(s, kFfnNormGamma, {H}, ParamKind::NormGamma);
  add(s, kFfnNormBeta, {H}, ParamKind::NormBeta);

  add(s, kPoolerW, {H, H}, ParamKind::Weight);
  add(s, kPoolerB, {H}, ParamKind::Bias);

  if (cfg.objectives.mlm) {
    add(s, kMlmTransformW, {H, E}, ParamKind::Weight);
    add(s, kMlmTransformB, {E}, ParamKind::Bias);
    add(s, kMlmNormGamma, {E}, ParamKind::NormGamma);
    add(s, kMlmNormBeta, {E}, ParamKind::NormBeta);
    add(s, kMlmDecoderBias, {V}, ParamKind::Bias);
  }
  if (cfg.objectives.sop) {
    add(s, kSopW, {H, 2}, ParamKind::Weight);
    add(s, kSopB, {2}, ParamKind::Bias);
  }
  if (cfg.objectives.wop) {
    add(s, kWopW, {H, P}, ParamKind::Weight);
    add(s, kWopB, {P}, ParamKind::Bias);
  }
  return s;
}

bool excluded_from_weight_decay(std::string_view name) {
  return name.ends_with(".bias") || name.ends_with("_bias") || name.find(".norm.") != std::string_view::npos;
}

ParamCount count_params(const AlbertConfig& cfg) {
  const std::size_t V = cfg.vocab_size, E = cfg.embedding_size, H = cfg.hidden_size, F = cfg.ffn_size,
                    P = cfg.max_positions;
  ParamCount c;
  c.embeddings = V * E + P * E + cfg.type_vocab * E + 2 * E + (E * H + H);
  c.encoder = 4 * (H * H + H) + 2 * H + (H * F + F) + (F * H + H) + 2 * H;
  c.pooler = H * H + H;
  if (cfg.objectives.mlm) c.mlm_head = (H * E + E) + 2 * E + V;
  if (cfg.objectives.sop) c.sop_head = 2 * H + 2;
  if (cfg.objectives.wop) c.wop_head = H * P + P;
  return c;
}

template <Real T>
const Tensor<T>& ParameterSet<T>::get(std::string_view name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) fail(ErrorCode::MissingTensor, "no parameter named '" + std::string(name) + "'");
  return it->second;
}

template <Real T>
Tensor<T>& ParameterSet<T>::get(std::string_view name) {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) fail(ErrorCode::MissingTensor, "no parameter named '" + std::string(name) + "'");
  return it->second;
}

template <Real T>
std::size_t ParameterSet<T>::num_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

template <Real T>
ParameterSet<T> init_params(const AlbertConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  typename ParameterSet<T>::Map tensors;
  for (const auto& spec : parameter_schema(cfg)) {
    Tensor<T> t(spec.shape);
    switch (spec.kind) {
      case ParamKind::Weight: {
        Rng rng(derive_seed(seed, name_hash(spec.name)));
        for (T& v : t.data()) {
          double z = rng.normal();
          while (z < -2.0 || z > 2.0) z = rng.normal();
          v = static_cast<T>(z * cfg.init_std);
        }
        break;
      }
      case ParamKind::NormGamma:
        t.fill(T{1});
        break;
      case ParamKind::Bias:
      case ParamKind::NormBeta:
        break;
    }
    t.set_requires_grad(true);
    tensors.emplace(spec.name, std::move(t));
  }
  return ParameterSet<T>(std::move(tensors));
}

template <Real T>
void check_schema(const ParameterSet<T>& params, const AlbertConfig& cfg) {
  const auto schema = parameter_schema(cfg);
  for (const auto& spec : schema) {
    if (!params.contains(spec.name)) fail(ErrorCode::MissingTensor, "missing parameter '" + spec.name + "'");
    const auto& t = params.get(spec.name);
    if (t.shape() != spec.shape) {
      fail(ErrorCode::ShapeMismatch, spec.name + " has shape " + shape_to_string(t.shape()) + ", expected " +
                                         shape_to_string(spec.shape));
    }
  }
  if (params.num_tensors() != schema.size()) {
    fail(ErrorCode::ShapeMismatch, "parameter set holds tensors outside the configured schema");
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template ParameterSet<float> init_params<float>(const AlbertConfig&, std::uint64_t);
template ParameterSet<double> init_params<double>(const AlbertConfig&, std::uint64_t);
template void check_schema<float>(const ParameterSet<float>&, const AlbertConfig&);
template void check_schema<double>(const ParameterSet<double>&, const AlbertConfig&);

}  // namespace kalbert::model
