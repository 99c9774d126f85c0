// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kalbert/data/corpus.hpp"
#include "kalbert/model/config.hpp"
#include "kalbert/train/train_config.hpp"
#include "kalbert/train/trainer.hpp"

namespace kalbert::train {

/// "MLM+SOP", "MLM+SOP+WOP", ...
std::string objectives_label(const model::Objectives& objectives);

/// The three combinations compared in the ablation: MLM+SOP, MLM+SOP+WOP,
/// MLM+WOP.
std::vector<model::Objectives> standard_combos();

struct AblationRow {
  model::Objectives objectives;
  std::size_t parameters = 0;
  std::size_t train_examples = 0;
  EvalResult eval;
  MetricsRecord last_step;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  /// Fixed-width text table; disabled objectives show "-".
  std::string render() const;
  nlohmann::json to_json() const;
};

/// Trains every combo from the same init seed on the same segment pairs.
/// Each combo prepares its own examples with corruption flags matching its
/// objectives, then evaluates on eval_pairs without dropout. All combos are
/// validated up front; an empty combo throws AllObjectivesDisabled.
AblationTable run_ablation(const TrainConfig& base, std::span<const data::SegmentPair> train_pairs,
                           std::span<const data::SegmentPair> eval_pairs, std::span<const model::Objectives> combos);

}  // namespace kalbert::train
