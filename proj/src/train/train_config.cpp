// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/train/train_config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "kalbert/core/json_fields.hpp"

namespace kalbert::train {

void TrainConfig::validate() const {
  model.validate();
  corruption.validate();
  lamb.validate();
  schedule.validate();
  if (micro_batch_size < 1) fail(ErrorCode::InvalidConfig, "micro_batch_size must be >= 1");
  if (accumulation_steps < 1) fail(ErrorCode::InvalidConfig, "accumulation_steps must be >= 1");
  if (total_steps < 1) fail(ErrorCode::InvalidConfig, "total_steps must be >= 1");
  if (metrics_every < 1) fail(ErrorCode::InvalidConfig, "metrics_every must be >= 1");
  if (schedule.total_steps != total_steps) fail(ErrorCode::InvalidConfig, "schedule and trainer disagree on total_steps");
}

nlohmann::json to_json(const corruption::CorruptionConfig& cfg) {
  return {{"mlm_rate", cfg.mlm_rate},     {"mask_prob", cfg.mask_prob},   {"random_prob", cfg.random_prob},
          {"keep_prob", cfg.keep_prob},   {"p_wop", cfg.p_wop},           {"wop_rate", cfg.wop_rate},
          {"enable_mlm", cfg.enable_mlm}, {"enable_sop", cfg.enable_sop}, {"enable_wop", cfg.enable_wop},
          {"seed", cfg.seed}};
}

corruption::CorruptionConfig corruption_config_from_json(const nlohmann::json& doc) {
  corruption::CorruptionConfig cfg;
  JsonFields f(doc, "corruption");
  f.read("mlm_rate", cfg.mlm_rate);
  f.read("mask_prob", cfg.mask_prob);
  f.read("random_prob", cfg.random_prob);
  f.read("keep_prob", cfg.keep_prob);
  f.read("p_wop", cfg.p_wop);
  f.read("wop_rate", cfg.wop_rate);
  f.read("enable_mlm", cfg.enable_mlm);
  f.read("enable_sop", cfg.enable_sop);
  f.read("enable_wop", cfg.enable_wop);
  f.read("seed", cfg.seed);
  f.finish();
  return cfg;
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  TrainConfig cfg;
  JsonFields top(doc, "config");
  cfg.model = model::albert_config_from_json(top.child("model"));
  cfg.corruption = corruption_config_from_json(top.child("corruption"));

  JsonFields opt(top.child("optimizer"), "optimizer");
  opt.read("peak_lr", cfg.schedule.peak_lr);
  opt.read("warmup_ratio", cfg.schedule.warmup_ratio);
  opt.read("beta1", cfg.lamb.beta1);
  opt.read("beta2", cfg.lamb.beta2);
  opt.read("eps", cfg.lamb.eps);
  opt.read("weight_decay", cfg.lamb.weight_decay);
  opt.read("trust_min", cfg.lamb.trust_min);
  opt.read("trust_max", cfg.lamb.trust_max);
  opt.finish();

  JsonFields tr(top.child("trainer"), "trainer");
  tr.read("micro_batch_size", cfg.micro_batch_size);
  tr.read("accumulation_steps", cfg.accumulation_steps);
  tr.read("total_steps", cfg.total_steps);
  tr.read("metrics_every", cfg.metrics_every);
  tr.read("checkpoint_every", cfg.checkpoint_every);
  tr.read("seed", cfg.seed);
  tr.read("shuffle", cfg.shuffle);
  tr.read("shards", cfg.shards);
  tr.read("output_dir", cfg.output_dir);
  tr.finish();
  top.finish();

  cfg.schedule.total_steps = cfg.total_steps;
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {
      {"model", model::to_json(cfg.model)},
      {"corruption", to_json(cfg.corruption)},
      {"optimizer",
       {{"peak_lr", cfg.schedule.peak_lr},
        {"warmup_ratio", cfg.schedule.warmup_ratio},
        {"beta1", cfg.lamb.beta1},
        {"beta2", cfg.lamb.beta2},
        {"eps", cfg.lamb.eps},
        {"weight_decay", cfg.lamb.weight_decay},
        {"trust_min", cfg.lamb.trust_min},
        {"trust_max", cfg.lamb.trust_max}}},
      {"trainer",
       {{"micro_batch_size", cfg.micro_batch_size},
        {"accumulation_steps", cfg.accumulation_steps},
        {"total_steps", cfg.total_steps},
        {"metrics_every", cfg.metrics_every},
        {"checkpoint_every", cfg.checkpoint_every},
        {"seed", cfg.seed},
        {"shuffle", cfg.shuffle},
        {"shards", cfg.shards},
        {"output_dir", cfg.output_dir}}},
  };
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return train_config_from_json(doc);
}

namespace {

void put(nlohmann::json& j, const char* key, const std::optional<double>& value) {
  if (value) j[key] = *value;
}

void get(const nlohmann::json& j, const char* key, std::optional<double>& out) {
  const auto it = j.find(key);
  if (it != j.end()) out = it->get<double>();
}

}  // namespace

nlohmann::json to_json(const MetricsRecord& r) {
  nlohmann::json j = {{"step", r.step},
                      {"lr", r.lr},
                      {"loss_total", r.loss_total},
                      {"examples_seen", r.examples_seen},
                      {"wall_ms", r.wall_ms}};
  put(j, "loss_mlm", r.loss_mlm);
  put(j, "loss_sop", r.loss_sop);
  put(j, "loss_wop", r.loss_wop);
  put(j, "acc_mlm", r.acc_mlm);
  put(j, "acc_sop", r.acc_sop);
  put(j, "acc_wop", r.acc_wop);
  return j;
}

MetricsRecord metrics_record_from_json(const nlohmann::json& j) {
  MetricsRecord r;
  try {
    r.step = j.at("step").get<std::uint64_t>();
    r.lr = j.at("lr").get<double>();
    r.loss_total = j.at("loss_total").get<double>();
    r.examples_seen = j.at("examples_seen").get<std::uint64_t>();
    r.wall_ms = j.at("wall_ms").get<double>();
    get(j, "loss_mlm", r.loss_mlm);
    get(j, "loss_sop", r.loss_sop);
    get(j, "loss_wop", r.loss_wop);
    get(j, "acc_mlm", r.acc_mlm);
    get(j, "acc_sop", r.acc_sop);
    get(j, "acc_wop", r.acc_wop);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("malformed metrics record: ") + e.what());
  }
  return r;
}

}  // namespace kalbert::train
