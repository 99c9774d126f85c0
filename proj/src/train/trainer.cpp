// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace kalbert::train {

namespace {
constexpr std::uint64_t kOrderStream = 0x6f72646572ULL;
constexpr std::uint64_t kDropoutStream = 0x64726f70ULL;
}  // namespace

DataOrder::DataOrder(std::size_t size, std::uint64_t seed, bool shuffle) : size_(size), seed_(seed), shuffle_(shuffle) {
  if (size_ == 0) fail(ErrorCode::ShardMismatch, "training data holds no examples");
}

std::size_t DataOrder::at(std::uint64_t position) {
  const std::uint64_t epoch = position / size_;
  const std::size_t offset = static_cast<std::size_t>(position % size_);
  if (!shuffle_) return offset;
  if (epoch != epoch_) {
    perm_.resize(size_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, kOrderStream, epoch));
    for (std::size_t i = size_; i > 1; --i) std::swap(perm_[i - 1], perm_[rng.uniform_index(i)]);
    epoch_ = epoch;
  }
  return perm_[offset];
}

ConcatSource::ConcatSource(std::vector<std::unique_ptr<data::ExampleSource>> parts) : parts_(std::move(parts)) {
  if (parts_.empty()) fail(ErrorCode::ShardMismatch, "no shards given");
  seq_len_ = parts_.front()->seq_len();
  for (const auto& p : parts_) {
    if (p->seq_len() != seq_len_) fail(ErrorCode::ShardMismatch, "shards disagree in sequence length");
    total_ += p->size();
  }
}

data::CorruptedExample ConcatSource::get(std::size_t index) const {
  for (const auto& p : parts_) {
    if (index < p->size()) return p->get(index);
    index -= p->size();
  }
  fail(ErrorCode::IndexOutOfRange, "example index beyond the concatenated shards");
}

std::unique_ptr<data::ExampleSource> open_shards(const std::vector<std::string>& paths, std::size_t seq_len) {
  std::vector<std::unique_ptr<data::ExampleSource>> parts;
  for (const auto& path : paths) {
    auto reader = std::make_unique<data::ShardReader>(path);
    if (reader->seq_len() != seq_len) {
      fail(ErrorCode::ShardMismatch, path + " has seq_len " + std::to_string(reader->seq_len()) +
                                         ", model expects " + std::to_string(seq_len));
    }
    parts.push_back(std::move(reader));
  }
  if (parts.size() == 1) return std::move(parts.front());
  return std::make_unique<ConcatSource>(std::move(parts));
}

template <Real T>
Trainer<T>::Trainer(TrainConfig cfg, const data::ExampleSource& source)
    : cfg_(std::move(cfg)),
      source_(source),
      order_(source.size(), cfg_.seed, cfg_.shuffle),
      rng_(derive_seed(cfg_.seed, kDropoutStream)) {
  cfg_.schedule.total_steps = cfg_.total_steps;
  cfg_.validate();
  if (source_.seq_len() != cfg_.model.seq_len) {
    fail(ErrorCode::ShardMismatch, "data seq_len " + std::to_string(source_.seq_len()) + " differs from model seq_len " +
                                       std::to_string(cfg_.model.seq_len));
  }
  params_ = model::init_params<T>(cfg_.model, cfg_.seed);
  state_ = optim::make_lamb_state(params_);
}

template <Real T>
Trainer<T>::Trainer(Checkpoint<T> checkpoint, const data::ExampleSource& source)
    : cfg_(std::move(checkpoint.config)),
      source_(source),
      order_(source.size(), cfg_.seed, cfg_.shuffle),
      params_(std::move(checkpoint.params)),
      state_(std::move(checkpoint.optimizer)),
      step_(checkpoint.step) {
  cfg_.validate();
  if (source_.seq_len() != cfg_.model.seq_len) {
    fail(ErrorCode::ShardMismatch, "data seq_len " + std::to_string(source_.seq_len()) + " differs from model seq_len " +
                                       std::to_string(cfg_.model.seq_len));
  }
  model::check_schema(params_, cfg_.model);
  rng_.restore(checkpoint.rng_state);
}

template <Real T>
std::vector<data::CorruptedExample> Trainer<T>::next_micro_batch(std::uint64_t first_position) {
  std::vector<data::CorruptedExample> batch;
  batch.reserve(cfg_.micro_batch_size);
  for (std::size_t i = 0; i < cfg_.micro_batch_size; ++i) batch.push_back(source_.get(order_.at(first_position + i)));
  return batch;
}

template <Real T>
MetricsRecord Trainer<T>::step() {
  if (step_ >= cfg_.total_steps) fail(ErrorCode::StepOutOfRange, "training already reached total_steps");
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t update = step_ + 1;
  const double lr = optim::lr_at(cfg_.schedule, update);
  const std::size_t k = cfg_.accumulation_steps;
  const std::uint64_t base = step_ * cfg_.effective_batch();

  optim::TensorMap<T> acc;
  model::Gradients<T> grads;
  const model::ForwardOptions options{.training = true, .keep_logits = false};
  double loss[3] = {0, 0, 0};
  std::size_t correct[3] = {0, 0, 0}, labeled[3] = {0, 0, 0};
  for (std::size_t micro = 0; micro < k; ++micro) {
    const auto examples = next_micro_batch(base + micro * cfg_.micro_batch_size);
    const model::Batch batch = model::make_batch(examples);
    model::ForwardOutput<T> out;
    try {
      out = model::forward_backward(params_, cfg_.model, batch, options, rng_, grads);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFinite) throw;
      fail(ErrorCode::NonFiniteLoss, "non-finite value at step " + std::to_string(update) + ": " + e.what());
    }
    if (!std::isfinite(static_cast<double>(out.total_loss))) {
      fail(ErrorCode::NonFiniteLoss, "non-finite loss at step " + std::to_string(update));
    }
    const std::optional<model::ObjectiveStats>* stats[3] = {&out.mlm, &out.sop, &out.wop};
    for (int i = 0; i < 3; ++i) {
      if (!*stats[i]) continue;
      loss[i] += (*stats[i])->loss / static_cast<double>(k);
      correct[i] += (*stats[i])->correct;
      labeled[i] += (*stats[i])->labeled;
    }
    optim::accumulate(acc, grads, k);
  }
  optim::lamb_step(params_, acc, state_, lr, cfg_.lamb);
  step_ = update;

  MetricsRecord r;
  r.step = update;
  r.lr = lr;
  const bool enabled[3] = {cfg_.model.objectives.mlm, cfg_.model.objectives.sop, cfg_.model.objectives.wop};
  std::optional<double>* losses[3] = {&r.loss_mlm, &r.loss_sop, &r.loss_wop};
  std::optional<double>* accs[3] = {&r.acc_mlm, &r.acc_sop, &r.acc_wop};
  for (int i = 0; i < 3; ++i) {
    if (!enabled[i]) continue;
    *losses[i] = loss[i];
    r.loss_total += loss[i];
    if (labeled[i] > 0) *accs[i] = static_cast<double>(correct[i]) / static_cast<double>(labeled[i]);
  }
  r.examples_seen = update * cfg_.effective_batch();
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

template <Real T>
void Trainer<T>::run(std::uint64_t until, const MetricsSink& sink) {
  until = std::min(until, cfg_.total_steps);
  const std::filesystem::path out_dir(cfg_.output_dir);
  while (step_ < until) {
    const MetricsRecord r = step();
    if (sink && r.step % cfg_.metrics_every == 0) sink(r);
    if (!cfg_.output_dir.empty()) {
      if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0) {
        save_checkpoint(checkpoint(), out_dir / ("step-" + std::to_string(step_) + ".kalc"));
      }
      if (step_ == cfg_.total_steps) save_checkpoint(checkpoint(), out_dir / "final.kalc");
    }
  }
}

template <Real T>
Checkpoint<T> Trainer<T>::checkpoint() const {
  Checkpoint<T> c;
  c.config = cfg_;
  c.step = step_;
  c.rng_state = rng_.state();
  c.params = params_;
  c.optimizer = state_;
  return c;
}

template <Real T>
EvalResult evaluate_intrinsic(const model::ParameterSet<T>& params, const model::AlbertConfig& cfg,
                              const data::ExampleSource& source, std::size_t batch_size) {
  if (source.seq_len() != cfg.seq_len) {
    fail(ErrorCode::ShardMismatch, "data seq_len " + std::to_string(source.seq_len()) + " differs from model seq_len " +
                                       std::to_string(cfg.seq_len));
  }
  if (batch_size == 0) fail(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  model::check_schema(params, cfg);
  EvalResult result;
  double loss_sum[3] = {0, 0, 0};
  std::size_t correct[3] = {0, 0, 0}, labeled[3] = {0, 0, 0};
  const model::ForwardOptions options{.training = false, .keep_logits = false};
  for (std::size_t first = 0; first < source.size(); first += batch_size) {
    std::vector<data::CorruptedExample> examples;
    for (std::size_t i = first; i < std::min(source.size(), first + batch_size); ++i) examples.push_back(source.get(i));
    const auto out = model::forward(params, cfg, model::make_batch(examples), options);
    const std::optional<model::ObjectiveStats>* stats[3] = {&out.mlm, &out.sop, &out.wop};
    for (int i = 0; i < 3; ++i) {
      if (!*stats[i]) continue;
      loss_sum[i] += (*stats[i])->loss * static_cast<double>((*stats[i])->labeled);
      correct[i] += (*stats[i])->correct;
      labeled[i] += (*stats[i])->labeled;
    }
    result.examples += examples.size();
  }
  const bool enabled[3] = {cfg.objectives.mlm, cfg.objectives.sop, cfg.objectives.wop};
  std::optional<double>* losses[3] = {&result.metrics.loss_mlm, &result.metrics.loss_sop, &result.metrics.loss_wop};
  std::optional<double>* accs[3] = {&result.metrics.acc_mlm, &result.metrics.acc_sop, &result.metrics.acc_wop};
  for (int i = 0; i < 3; ++i) {
    if (!enabled[i]) continue;
    const double mean = labeled[i] > 0 ? loss_sum[i] / static_cast<double>(labeled[i]) : 0.0;
    *losses[i] = mean;
    result.metrics.loss_total += mean;
    if (labeled[i] > 0) *accs[i] = static_cast<double>(correct[i]) / static_cast<double>(labeled[i]);
  }
  result.mlm_labeled = labeled[0];
  result.sop_labeled = labeled[1];
  result.wop_labeled = labeled[2];
  return result;
}

namespace {

template <Real T>
std::vector<MetricsRecord> train_typed(const TrainConfig& cfg, const MetricsSink& sink,
                                       const std::filesystem::path& resume) {
  std::vector<MetricsRecord> records;
  std::ofstream metrics;
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    const auto path = std::filesystem::path(cfg.output_dir) / "metrics.jsonl";
    metrics.open(path, resume.empty() ? std::ios::trunc : std::ios::app);
    if (!metrics) fail(ErrorCode::IoError, "cannot write " + path.string());
  }
  auto emit = [&](const MetricsRecord& r) {
    records.push_back(r);
    if (metrics.is_open()) metrics << to_json(r).dump() << '\n' << std::flush;
    if (sink) sink(r);
  };
  if (resume.empty()) {
    const auto source = open_shards(cfg.shards, cfg.model.seq_len);
    Trainer<T> trainer(cfg, *source);
    trainer.run_to_completion(emit);
  } else {
    Checkpoint<T> ckpt = load_checkpoint<T>(resume);
    ckpt.config.shards = cfg.shards;
    ckpt.config.output_dir = cfg.output_dir;
    const auto source = open_shards(ckpt.config.shards, ckpt.config.model.seq_len);
    Trainer<T> trainer(std::move(ckpt), *source);
    trainer.run_to_completion(emit);
  }
  return records;
}

}  // namespace

std::vector<MetricsRecord> train(const TrainConfig& cfg, const MetricsSink& sink, const std::filesystem::path& resume) {
  DType dtype = cfg.model.dtype;
  if (!resume.empty()) dtype = read_checkpoint_info(resume).config.model.dtype;
  if (dtype == DType::float64) return train_typed<double>(cfg, sink, resume);
  return train_typed<float>(cfg, sink, resume);
}

template class Trainer<float>;
template class Trainer<double>;
template EvalResult evaluate_intrinsic<float>(const model::ParameterSet<float>&, const model::AlbertConfig&,
                                              const data::ExampleSource&, std::size_t);
template EvalResult evaluate_intrinsic<double>(const model::ParameterSet<double>&, const model::AlbertConfig&,
                                               const data::ExampleSource&, std::size_t);

}  // namespace kalbert::train
