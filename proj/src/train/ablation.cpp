// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/train/ablation.hpp"

#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kalbert/corruption/corruption.hpp"
#include "kalbert/model/params.hpp"

namespace kalbert::train {

std::string objectives_label(const model::Objectives& o) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(o.mlm, "MLM");
  add(o.sop, "SOP");
  add(o.wop, "WOP");
  return out.empty() ? "none" : out;
}

std::vector<model::Objectives> standard_combos() {
  model::Objectives mlm_sop, all, mlm_wop;
  mlm_sop.wop = false;
  mlm_wop.sop = false;
  return {mlm_sop, all, mlm_wop};
}

namespace {

TrainConfig combo_config(const TrainConfig& base, const model::Objectives& combo) {
  TrainConfig cfg = base;
  cfg.model.objectives.mlm = combo.mlm;
  cfg.model.objectives.sop = combo.sop;
  cfg.model.objectives.wop = combo.wop;
  cfg.corruption.enable_mlm = combo.mlm;
  cfg.corruption.enable_sop = combo.sop;
  cfg.corruption.enable_wop = combo.wop;
  cfg.output_dir.clear();
  cfg.schedule.total_steps = cfg.total_steps;
  cfg.validate();
  return cfg;
}

template <Real T>
AblationRow run_combo(const TrainConfig& cfg, std::span<const data::SegmentPair> train_pairs,
                      std::span<const data::SegmentPair> eval_pairs) {
  const std::size_t V = cfg.model.vocab_size, S = cfg.model.seq_len;
  auto train_set = corruption::prepare_examples(train_pairs, V, S, cfg.corruption);
  corruption::CorruptionConfig eval_corruption = cfg.corruption;
  eval_corruption.seed = derive_seed(cfg.corruption.seed, 0x6576616cULL);
  auto eval_set = corruption::prepare_examples(eval_pairs, V, S, eval_corruption);
  const data::InMemoryExamples train_source(std::move(train_set.examples), S);
  const data::InMemoryExamples eval_source(std::move(eval_set.examples), S);

  AblationRow row;
  row.objectives = cfg.model.objectives;
  row.parameters = model::count_params(cfg.model).total();
  row.train_examples = train_source.size();
  Trainer<T> trainer(cfg, train_source);
  trainer.run_to_completion([&](const MetricsRecord& r) { row.last_step = r; });
  row.eval = evaluate_intrinsic(trainer.params(), cfg.model, eval_source);
  return row;
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

void put(nlohmann::json& j, const char* key, const std::optional<double>& v) {
  j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

AblationTable run_ablation(const TrainConfig& base, std::span<const data::SegmentPair> train_pairs,
                           std::span<const data::SegmentPair> eval_pairs, std::span<const model::Objectives> combos) {
  if (combos.empty()) fail(ErrorCode::InvalidConfig, "no objective combinations given");
  std::vector<TrainConfig> configs;
  for (const auto& combo : combos) configs.push_back(combo_config(base, combo));
  AblationTable table;
  for (const auto& cfg : configs) {
    if (cfg.model.dtype == DType::float64) {
      table.rows.push_back(run_combo<double>(cfg, train_pairs, eval_pairs));
    } else {
      table.rows.push_back(run_combo<float>(cfg, train_pairs, eval_pairs));
    }
  }
  return table;
}

std::string AblationTable::render() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %10s %8s %8s %8s %9s %9s %9s\n", "objectives", "params", "acc_mlm",
                "acc_sop", "acc_wop", "loss_mlm", "loss_sop", "loss_wop");
  out << line;
  for (const auto& r : rows) {
    const auto& m = r.eval.metrics;
    std::snprintf(line, sizeof(line), "%-12s %10zu %8s %8s %8s %9s %9s %9s\n", objectives_label(r.objectives).c_str(),
                  r.parameters, cell(m.acc_mlm).c_str(), cell(m.acc_sop).c_str(), cell(m.acc_wop).c_str(),
                  cell(m.loss_mlm).c_str(), cell(m.loss_sop).c_str(), cell(m.loss_wop).c_str());
    out << line;
  }
  return out.str();
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    const auto& m = r.eval.metrics;
    nlohmann::json j = {{"objectives", objectives_label(r.objectives)},
                        {"parameters", r.parameters},
                        {"train_examples", r.train_examples},
                        {"eval_examples", r.eval.examples}};
    put(j, "acc_mlm", m.acc_mlm);
    put(j, "acc_sop", m.acc_sop);
    put(j, "acc_wop", m.acc_wop);
    put(j, "loss_mlm", m.loss_mlm);
    put(j, "loss_sop", m.loss_sop);
    put(j, "loss_wop", m.loss_wop);
    rows_json.push_back(std::move(j));
  }
  return {{"rows", std::move(rows_json)}};
}

}  // namespace kalbert::train
