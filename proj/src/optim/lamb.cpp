// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/optim/lamb.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace kalbert::optim {

void LambConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::InvalidConfig, what);
  };
  require(beta1 >= 0.0 && beta1 < 1.0, "beta1 must lie in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "beta2 must lie in [0, 1)");
  require(eps > 0.0, "eps must be positive");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(trust_min >= 0.0 && trust_min <= trust_max, "trust clip range must satisfy 0 <= min <= max");
}

template <Real T>
LambState<T> make_lamb_state(const model::ParameterSet<T>& params) {
  LambState<T> state;
  for (const auto& [name, t] : params.tensors()) {
    state.m.emplace(name, Tensor<T>(t.shape()));
    state.v.emplace(name, Tensor<T>(t.shape()));
  }
  return state;
}

double trust_ratio(double weight_norm, double update_norm, const LambConfig& cfg) {
  const double ratio = (weight_norm > 0.0 && update_norm > 0.0) ? weight_norm / update_norm : 1.0;
  return std::clamp(ratio, cfg.trust_min, cfg.trust_max);
}

template <Real T>
void lamb_step(model::ParameterSet<T>& params, const TensorMap<T>& grads, LambState<T>& state, double lr,
               const LambConfig& cfg, LambTrace* trace) {
  for (const auto& [name, w] : params.tensors()) {
    const auto g = grads.find(name);
    if (g == grads.end()) fail(ErrorCode::ShapeMismatch, "no gradient for '" + name + "'");
    if (g->second.shape() != w.shape()) {
      fail(ErrorCode::ShapeMismatch, "gradient for '" + name + "' has shape " + shape_to_string(g->second.shape()));
    }
    if (!g->second.all_finite()) fail(ErrorCode::NonFiniteGradient, "non-finite gradient for '" + name + "'");
  }
  if (state.m.empty()) state = make_lamb_state(params);

  const std::uint64_t t = state.step + 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  std::vector<double> r;
  for (auto& [name, w] : params.tensors()) {
    const auto gd = grads.find(name)->second.data();
    auto m = state.m.at(name).data();
    auto v = state.v.at(name).data();
    auto wd = w.data();
    const double decay = model::excluded_from_weight_decay(name) ? 0.0 : cfg.weight_decay;
    r.assign(wd.size(), 0.0);
    double r_norm2 = 0.0;
    for (std::size_t i = 0; i < wd.size(); ++i) {
      const double gi = static_cast<double>(gd[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      r[i] = (mi / c1) / (std::sqrt(vi / c2) + cfg.eps) + decay * static_cast<double>(wd[i]);
      r_norm2 += r[i] * r[i];
    }
    const double trust = trust_ratio(std::sqrt(squared_norm<T>(wd)), std::sqrt(r_norm2), cfg);
    if (trace != nullptr) trace->trust.insert_or_assign(name, trust);
    const double step = lr * trust;
    for (std::size_t i = 0; i < wd.size(); ++i) wd[i] = static_cast<T>(static_cast<double>(wd[i]) - step * r[i]);
  }
  state.step = t;
}

std::uint64_t Schedule::warmup_steps() const {
  return static_cast<std::uint64_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps) - 1e-9));
}

void Schedule::validate() const {
  if (!(peak_lr > 0.0)) fail(ErrorCode::InvalidConfig, "peak_lr must be positive");
  if (!(warmup_ratio > 0.0 && warmup_ratio < 1.0)) fail(ErrorCode::InvalidConfig, "warmup_ratio must lie in (0, 1)");
  if (total_steps < 1) fail(ErrorCode::InvalidConfig, "total_steps must be >= 1");
}

double lr_at(const Schedule& schedule, std::uint64_t step) {
  if (step > schedule.total_steps) {
    fail(ErrorCode::StepOutOfRange,
         "step " + std::to_string(step) + " outside [0, " + std::to_string(schedule.total_steps) + "]");
  }
  const std::uint64_t warm = schedule.warmup_steps();
  if (step <= warm) {
    return warm == 0 ? schedule.peak_lr
                     : schedule.peak_lr * static_cast<double>(step) / static_cast<double>(warm);
  }
  const double remaining = static_cast<double>(schedule.total_steps - step);
  return schedule.peak_lr * remaining / static_cast<double>(schedule.total_steps - warm);
}

template <Real T>
void accumulate(TensorMap<T>& acc, const TensorMap<T>& micro, std::size_t k) {
  if (k == 0) fail(ErrorCode::InvalidConfig, "accumulation count must be >= 1");
  if (acc.empty()) {
    for (const auto& [name, g] : micro) acc.emplace(name, Tensor<T>(g.shape()));
  }
  if (acc.size() != micro.size()) fail(ErrorCode::ShapeMismatch, "gradient sets hold different tensors");
  const T inv = T{1} / static_cast<T>(k);
  for (const auto& [name, g] : micro) {
    const auto it = acc.find(name);
    if (it == acc.end()) fail(ErrorCode::ShapeMismatch, "unexpected gradient '" + name + "'");
    if (it->second.shape() != g.shape()) {
      fail(ErrorCode::ShapeMismatch, "gradient '" + name + "': " + shape_to_string(g.shape()) + " vs " +
                                         shape_to_string(it->second.shape()));
    }
    auto a = it->second.data();
    const auto src = g.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += src[i] * inv;
  }
}

template LambState<float> make_lamb_state<float>(const model::ParameterSet<float>&);
template LambState<double> make_lamb_state<double>(const model::ParameterSet<double>&);
template void lamb_step<float>(model::ParameterSet<float>&, const TensorMap<float>&, LambState<float>&, double,
                               const LambConfig&, LambTrace*);
template void lamb_step<double>(model::ParameterSet<double>&, const TensorMap<double>&, LambState<double>&, double,
                                const LambConfig&, LambTrace*);
template void accumulate<float>(TensorMap<float>&, const TensorMap<float>&, std::size_t);
template void accumulate<double>(TensorMap<double>&, const TensorMap<double>&, std::size_t);

}  // namespace kalbert::optim
