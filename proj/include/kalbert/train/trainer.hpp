// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "kalbert/core/rng.hpp"
#include "kalbert/data/shard.hpp"
#include "kalbert/model/albert.hpp"
#include "kalbert/optim/lamb.hpp"
#include "kalbert/train/checkpoint.hpp"
#include "kalbert/train/train_config.hpp"

namespace kalbert::train {

/// Maps a global example position to a source index. Positions walk the
/// source epoch by epoch; each epoch is a fresh permutation keyed by
/// (seed, epoch), or the identity when shuffling is off.
class DataOrder {
 public:
  DataOrder(std::size_t size, std::uint64_t seed, bool shuffle);

  std::size_t at(std::uint64_t position);
  std::size_t size() const noexcept { return size_; }

 private:
  std::size_t size_;
  std::uint64_t seed_;
  bool shuffle_;
  std::uint64_t epoch_ = UINT64_MAX;
  std::vector<std::size_t> perm_;
};

/// Several sources with equal seq_len read back to back.
class ConcatSource final : public data::ExampleSource {
 public:
  explicit ConcatSource(std::vector<std::unique_ptr<data::ExampleSource>> parts);

  std::size_t size() const override { return total_; }
  std::size_t seq_len() const override { return seq_len_; }
  data::CorruptedExample get(std::size_t index) const override;

 private:
  std::vector<std::unique_ptr<data::ExampleSource>> parts_;
  std::size_t total_ = 0;
  std::size_t seq_len_ = 0;
};

/// Opens every shard; throws ShardMismatch when a shard's sequence length
/// differs from seq_len, or IoError / CorruptShard from the reader.
std::unique_ptr<data::ExampleSource> open_shards(const std::vector<std::string>& paths, std::size_t seq_len);

using MetricsSink = std::function<void(const MetricsRecord&)>;

template <Real T>
class Trainer {
 public:
  /// Fresh run: parameters from init_params(cfg.model, cfg.seed).
  Trainer(TrainConfig cfg, const data::ExampleSource& source);
  /// Continues from a checkpoint, using its embedded config.
  Trainer(Checkpoint<T> checkpoint, const data::ExampleSource& source);

  /// One effective step: accumulation_steps micro-batches, averaged
  /// gradients, one LAMB update. Throws NonFiniteLoss before touching the
  /// parameters when a loss is not finite.
  MetricsRecord step();

  /// Steps until step() == until (at most total_steps). Metrics go to sink
  /// every metrics_every steps. When output_dir is set, checkpoints land at
  /// checkpoint_every multiples and after the last step.
  void run(std::uint64_t until, const MetricsSink& sink = {});
  void run_to_completion(const MetricsSink& sink = {}) { run(cfg_.total_steps, sink); }

  Checkpoint<T> checkpoint() const;

  const TrainConfig& config() const noexcept { return cfg_; }
  const model::ParameterSet<T>& params() const noexcept { return params_; }
  const optim::LambState<T>& optimizer() const noexcept { return state_; }
  std::uint64_t current_step() const noexcept { return step_; }

 private:
  std::vector<data::CorruptedExample> next_micro_batch(std::uint64_t first_position);

  TrainConfig cfg_;
  const data::ExampleSource& source_;
  DataOrder order_;
  model::ParameterSet<T> params_;
  optim::LambState<T> state_;
  Rng rng_;
  std::uint64_t step_ = 0;
};

/// Aggregated no-dropout evaluation. Losses are means over labeled
/// positions (examples for SOP); absent fields follow the MetricsRecord rules.
struct EvalResult {
  model::MetricsFragment metrics;
  std::size_t examples = 0;
  std::size_t mlm_labeled = 0;
  std::size_t sop_labeled = 0;
  std::size_t wop_labeled = 0;
};

/// Throws ShardMismatch when the source seq_len differs from the config.
template <Real T>
EvalResult evaluate_intrinsic(const model::ParameterSet<T>& params, const model::AlbertConfig& cfg,
                              const data::ExampleSource& source, std::size_t batch_size = 32);

/// Trains cfg.shards to completion, writing metrics.jsonl and checkpoints
/// under cfg.output_dir when set. Dispatches on cfg.model.dtype. With a
/// resume path the run continues from that checkpoint, keeping its
/// embedded config but the shards and output_dir of cfg. Returns the metric
/// records of this invocation.
std::vector<MetricsRecord> train(const TrainConfig& cfg, const MetricsSink& sink = {},
                                 const std::filesystem::path& resume = {});

}  // namespace kalbert::train
