// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "kalbert/core/tensor.hpp"
#include "kalbert/model/params.hpp"

namespace kalbert::optim {

template <Real T>
using TensorMap = std::map<std::string, Tensor<T>, std::less<>>;

struct LambConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.01;
  double trust_min = 0.0;
  double trust_max = 10.0;

  /// Throws InvalidConfig.
  void validate() const;

  friend bool operator==(const LambConfig&, const LambConfig&) = default;
};

/// Moments mirror the parameter tensors; step counts completed updates.
template <Real T>
struct LambState {
  TensorMap<T> m;
  TensorMap<T> v;
  std::uint64_t step = 0;

  friend bool operator==(const LambState&, const LambState&) = default;
};

/// Zero moments shaped like params.
template <Real T>
LambState<T> make_lamb_state(const model::ParameterSet<T>& params);

/// Per-tensor diagnostics of the last update.
struct LambTrace {
  std::map<std::string, double, std::less<>> trust;
};

/// One LAMB update in place. Tensors named by excluded_from_weight_decay
/// take no decay. Throws NonFiniteGradient or ShapeMismatch; parameters are
/// left untouched when it throws.
template <Real T>
void lamb_step(model::ParameterSet<T>& params, const TensorMap<T>& grads, LambState<T>& state, double lr,
               const LambConfig& cfg, LambTrace* trace = nullptr);

/// Ratio ||w|| / ||r||, 1 when either norm is zero, clipped to
/// [trust_min, trust_max].
double trust_ratio(double weight_norm, double update_norm, const LambConfig& cfg);

struct Schedule {
  double peak_lr = 1.25e-3;
  double warmup_ratio = 1.25e-2;
  std::uint64_t total_steps = 1;

  /// ceil(warmup_ratio * total_steps).
  std::uint64_t warmup_steps() const;

  /// Throws InvalidConfig.
  void validate() const;

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

/// Linear warmup from 0 to peak, then linear decay to 0 at total_steps.
/// Throws StepOutOfRange outside [0, total_steps].
double lr_at(const Schedule& schedule, std::uint64_t step);

/// acc += micro / k for every tensor. An empty acc is initialized to zeros
/// first. Throws ShapeMismatch when names or shapes disagree.
template <Real T>
void accumulate(TensorMap<T>& acc, const TensorMap<T>& micro, std::size_t k);

}  // namespace kalbert::optim
