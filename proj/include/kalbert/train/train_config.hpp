// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kalbert/corruption/corruption.hpp"
#include "kalbert/model/config.hpp"
#include "kalbert/optim/lamb.hpp"

namespace kalbert::train {

struct TrainConfig {
  model::AlbertConfig model;
  corruption::CorruptionConfig corruption;
  optim::LambConfig lamb;
  /// total_steps here always mirrors TrainConfig::total_steps.
  optim::Schedule schedule;
  std::size_t micro_batch_size = 8;
  std::size_t accumulation_steps = 1;
  std::uint64_t total_steps = 1;
  std::uint64_t metrics_every = 1;
  /// 0 disables periodic checkpoints; the final one is always written when
  /// an output directory is given.
  std::uint64_t checkpoint_every = 0;
  std::uint64_t seed = 0;
  /// Reshuffle example order every epoch, keyed by (seed, epoch).
  bool shuffle = true;
  std::vector<std::string> shards;
  std::string output_dir;

  std::size_t effective_batch() const noexcept { return micro_batch_size * accumulation_steps; }

  /// Throws InvalidConfig (or AllObjectivesDisabled).
  void validate() const;
};

/// Run config file: {"model", "corruption", "optimizer", "trainer"}. Every
/// section is optional; unknown keys are rejected with InvalidConfig.
TrainConfig train_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const TrainConfig& cfg);

TrainConfig load_train_config(const std::filesystem::path& path);

nlohmann::json to_json(const corruption::CorruptionConfig& cfg);
corruption::CorruptionConfig corruption_config_from_json(const nlohmann::json& doc);

/// One line of the metrics stream. Per-objective fields are present iff the
/// objective is enabled; accuracies are also absent when nothing was labeled.
struct MetricsRecord {
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  std::optional<double> loss_mlm;
  std::optional<double> loss_sop;
  std::optional<double> loss_wop;
  std::optional<double> acc_mlm;
  std::optional<double> acc_sop;
  std::optional<double> acc_wop;
  std::uint64_t examples_seen = 0;
  double wall_ms = 0.0;
};

nlohmann::json to_json(const MetricsRecord& record);
MetricsRecord metrics_record_from_json(const nlohmann::json& doc);

}  // namespace kalbert::train
