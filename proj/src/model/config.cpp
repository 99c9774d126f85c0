// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/model/config.hpp"

#include <nlohmann/json.hpp>

#include "kalbert/core/json_fields.hpp"

namespace kalbert::model {

void AlbertConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::InvalidConfig, what);
  };
  require(vocab_size >= 6, "vocab_size must exceed the five special tokens");
  require(embedding_size >= 1 && hidden_size >= 1 && num_layers >= 1 && num_heads >= 1 && ffn_size >= 1 &&
              max_positions >= 1 && seq_len >= 1,
          "all model extents must be >= 1");
  require(type_vocab == 2, "type_vocab must be 2");
  require(hidden_size % num_heads == 0, "hidden_size " + std::to_string(hidden_size) +
                                            " not divisible by num_heads " + std::to_string(num_heads));
  require(seq_len <= max_positions, "seq_len " + std::to_string(seq_len) + " exceeds max_positions " +
                                        std::to_string(max_positions));
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(layer_norm_eps > 0.0, "layer_norm_eps must be positive");
  require(init_std > 0.0, "init_std must be positive");
  require(objectives.mlm_weight >= 0.0 && objectives.sop_weight >= 0.0 && objectives.wop_weight >= 0.0,
          "loss weights must be non-negative");
  if (!objectives.any()) fail(ErrorCode::AllObjectivesDisabled, "at least one objective must be enabled");
}

AlbertConfig large_config() {
  AlbertConfig cfg;
  cfg.hidden_size = 1024;
  cfg.ffn_size = 4096;
  cfg.num_heads = 16;
  return cfg;
}

nlohmann::json to_json(const AlbertConfig& cfg) {
  return {
      {"vocab_size", cfg.vocab_size},
      {"embedding_size", cfg.embedding_size},
      {"hidden_size", cfg.hidden_size},
      {"num_layers", cfg.num_layers},
      {"num_heads", cfg.num_heads},
      {"ffn_size", cfg.ffn_size},
      {"max_positions", cfg.max_positions},
      {"type_vocab", cfg.type_vocab},
      {"seq_len", cfg.seq_len},
      {"dropout", cfg.dropout},
      {"layer_norm_eps", cfg.layer_norm_eps},
      {"init_std", cfg.init_std},
      {"dtype", std::string(to_string(cfg.dtype))},
      {"objectives",
       {{"mlm", cfg.objectives.mlm},
        {"sop", cfg.objectives.sop},
        {"wop", cfg.objectives.wop},
        {"mlm_weight", cfg.objectives.mlm_weight},
        {"sop_weight", cfg.objectives.sop_weight},
        {"wop_weight", cfg.objectives.wop_weight}}},
  };
}

AlbertConfig albert_config_from_json(const nlohmann::json& doc) {
  AlbertConfig cfg;
  JsonFields f(doc, "model");
  f.read("vocab_size", cfg.vocab_size);
  f.read("embedding_size", cfg.embedding_size);
  f.read("hidden_size", cfg.hidden_size);
  f.read("num_layers", cfg.num_layers);
  f.read("num_heads", cfg.num_heads);
  f.read("ffn_size", cfg.ffn_size);
  f.read("max_positions", cfg.max_positions);
  f.read("type_vocab", cfg.type_vocab);
  f.read("seq_len", cfg.seq_len);
  f.read("dropout", cfg.dropout);
  f.read("layer_norm_eps", cfg.layer_norm_eps);
  f.read("init_std", cfg.init_std);
  std::string dtype(to_string(cfg.dtype));
  f.read("dtype", dtype);
  cfg.dtype = parse_dtype(dtype);
  JsonFields obj(f.child("objectives"), "model.objectives");
  obj.read("mlm", cfg.objectives.mlm);
  obj.read("sop", cfg.objectives.sop);
  obj.read("wop", cfg.objectives.wop);
  obj.read("mlm_weight", cfg.objectives.mlm_weight);
  obj.read("sop_weight", cfg.objectives.sop_weight);
  obj.read("wop_weight", cfg.objectives.wop_weight);
  obj.finish();
  f.finish();
  return cfg;
}

}  // namespace kalbert::model
