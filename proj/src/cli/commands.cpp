// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "kalbert/corruption/corruption.hpp"
#include "kalbert/data/corpus.hpp"
#include "kalbert/data/shard.hpp"
#include "kalbert/text/tokenizer.hpp"
#include "kalbert/text/unicode.hpp"
#include "kalbert/text/vocab.hpp"
#include "kalbert/train/ablation.hpp"
#include "kalbert/train/checkpoint.hpp"
#include "kalbert/train/trainer.hpp"

namespace kalbert::cli {
namespace {

namespace fs = std::filesystem;

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
  auto logger = std::make_shared<spdlog::logger>("kalbert", sink);
  logger->set_pattern("[%l] %v");
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char* env = std::getenv(kLogLevelEnv); env != nullptr && *env != '\0') {
    level = spdlog::level::from_str(env);
  }
  logger->set_level(level);
  return logger;
}

std::string fixed(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string opt_cell(const std::optional<double>& v) { return v ? fixed(*v) : "-"; }

std::vector<fs::path> to_paths(const std::vector<std::string>& items) {
  return std::vector<fs::path>(items.begin(), items.end());
}

std::vector<data::SegmentPair> corpus_pairs(const std::vector<data::Document>& docs, const text::Vocab& vocab,
                                            std::size_t seq_len) {
  std::vector<data::SegmentPair> pairs;
  for (const auto& doc : docs) {
    auto more = data::make_segment_pairs(doc, vocab, seq_len);
    pairs.insert(pairs.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  return pairs;
}

/// Terminal columns taken by a code point; Hangul and CJK ranges are double
/// width.
std::size_t columns(char32_t cp) {
  const bool wide = (cp >= 0x1100 && cp <= 0x115F) || (cp >= 0x2E80 && cp <= 0xA4CF) ||
                    (cp >= 0xAC00 && cp <= 0xD7A3) || (cp >= 0xF900 && cp <= 0xFAFF) ||
                    (cp >= 0xFE30 && cp <= 0xFE4F) || (cp >= 0xFF00 && cp <= 0xFF60) || (cp >= 0xFFE0 && cp <= 0xFFE6);
  return wide ? 2 : 1;
}

std::string pad(const std::string& s, std::size_t width) {
  std::size_t n = s.size();
  if (text::is_valid_utf8(s)) {
    n = 0;
    for (const char32_t cp : text::decode_utf8(s)) n += columns(cp);
  }
  return n >= width ? s + ' ' : s + std::string(width - n, ' ');
}

struct VocabArgs {
  std::vector<std::string> inputs;
  std::size_t size = 32000;
  std::string out;
  std::string marker{text::kDefaultContinuationMarker};
  std::size_t show_merges = 10;
};

int cmd_vocab(const VocabArgs& a, std::ostream& out, spdlog::logger& log) {
  const auto docs = data::ingest(to_paths(a.inputs));
  std::vector<std::string> lines;
  for (const auto& d : docs) lines.insert(lines.end(), d.sentences.begin(), d.sentences.end());
  log.info("building vocabulary from {} lines in {} documents", lines.size(), docs.size());
  const text::Vocab vocab = text::build_vocab(lines, a.size, text::BpeOptions{a.marker});
  vocab.save(a.out);
  out << "tokens " << vocab.size() << '\n';
  out << "merges " << vocab.merges().size() << '\n';
  const std::size_t shown = std::min(a.show_merges, vocab.merges().size());
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& [l, r] = vocab.merges()[i];
    out << "  " << (i + 1) << ". " << l << " + " << r << '\n';
  }
  return kExitOk;
}

struct PrepareArgs {
  std::vector<std::string> inputs;
  std::string vocab;
  std::string config;
  std::string out;
};

int cmd_prepare(const PrepareArgs& a, std::ostream& out, spdlog::logger& log) {
  const train::TrainConfig cfg = a.config.empty() ? train::TrainConfig{} : train::load_train_config(a.config);
  const text::Vocab vocab = text::Vocab::load(a.vocab);
  if (vocab.size() != cfg.model.vocab_size) {
    log.warn("vocabulary holds {} tokens but model.vocab_size is {}", vocab.size(), cfg.model.vocab_size);
  }
  const std::size_t seq_len = cfg.model.seq_len;
  const auto docs = data::ingest(to_paths(a.inputs));
  const auto pairs = corpus_pairs(docs, vocab, seq_len);
  log.info("{} documents, {} segment pairs", docs.size(), pairs.size());
  const auto prepared = corruption::prepare_examples(pairs, vocab.size(), seq_len, cfg.corruption);
  data::write_shard(a.out, prepared.examples, seq_len);
  const auto& s = prepared.stats;
  out << "examples " << s.examples << '\n';
  out << "skipped_pairs " << s.skipped_pairs << '\n';
  out << "masked_fraction " << fixed(s.masked_fraction()) << '\n';
  out << "wop_fraction " << fixed(s.wop_fraction()) << '\n';
  out << "wop_moved_fraction " << fixed(s.wop_moved_fraction()) << '\n';
  out << "swapped_fraction " << fixed(s.examples ? static_cast<double>(s.swapped) / static_cast<double>(s.examples) : 0.0)
      << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> data;
  std::string out;
  std::string resume;
};

int cmd_train(const TrainArgs& a, std::ostream& out, spdlog::logger& log) {
  train::TrainConfig cfg = train::load_train_config(a.config);
  if (!a.data.empty()) cfg.shards = a.data;
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (cfg.shards.empty()) fail(ErrorCode::InvalidConfig, "no training shards given");
  log.info("training {} steps, effective batch {}", cfg.total_steps, cfg.effective_batch());
  const auto records = train::train(cfg, [&](const train::MetricsRecord& r) {
    log.info("step {} lr {:.3e} loss {:.4f}", r.step, r.lr, r.loss_total);
  }, a.resume);
  out << "steps " << records.size() << '\n';
  if (!records.empty()) {
    const auto& r = records.back();
    out << "final_step " << r.step << '\n';
    out << "loss_total " << fixed(r.loss_total) << '\n';
  }
  if (!cfg.output_dir.empty()) out << "output " << cfg.output_dir << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::vector<std::string> data;
  std::size_t batch_size = 32;
};

template <Real T>
train::EvalResult eval_typed(const EvalArgs& a, const train::CheckpointInfo& info) {
  const auto ckpt = train::load_checkpoint<T>(a.checkpoint);
  const auto source = train::open_shards(a.data, info.config.model.seq_len);
  return train::evaluate_intrinsic(ckpt.params, ckpt.config.model, *source, a.batch_size);
}

int cmd_eval(const EvalArgs& a, std::ostream& out, spdlog::logger& log) {
  const auto info = train::read_checkpoint_info(a.checkpoint);
  log.info("checkpoint at step {}", info.step);
  const auto result = info.config.model.dtype == DType::float64 ? eval_typed<double>(a, info)
                                                                  : eval_typed<float>(a, info);
  const auto& m = result.metrics;
  char line[128];
  std::snprintf(line, sizeof(line), "%-10s %10s %10s %10s\n", "objective", "loss", "acc", "labeled");
  out << line;
  auto row = [&](const char* name, const std::optional<double>& loss, const std::optional<double>& acc,
                 std::size_t labeled) {
    std::snprintf(line, sizeof(line), "%-10s %10s %10s %10s\n", name, opt_cell(loss).c_str(), opt_cell(acc).c_str(),
                  loss ? std::to_string(labeled).c_str() : "-");
    out << line;
  };
  row("mlm", m.loss_mlm, m.acc_mlm, result.mlm_labeled);
  row("sop", m.loss_sop, m.acc_sop, result.sop_labeled);
  row("wop", m.loss_wop, m.acc_wop, result.wop_labeled);
  out << "examples " << result.examples << '\n';
  return kExitOk;
}

struct InspectArgs {
  std::string shard;
  std::size_t index = 0;
  std::string vocab;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  const data::ShardReader reader(a.shard);
  const text::Vocab vocab = text::Vocab::load(a.vocab);
  const data::CorruptedExample ex = reader.get(a.index);
  auto piece = [&](std::int32_t id) {
    return id >= 0 && static_cast<std::size_t>(id) < vocab.size() ? vocab.token(id) : "<" + std::to_string(id) + ">";
  };
  out << "example " << a.index << " of " << reader.size() << "  seq_len " << reader.seq_len() << "  sop_label "
      << ex.sop_label << '\n';
  const std::size_t w = std::max<std::size_t>(12, 2 * vocab.max_token_chars() + 2);
  out << pad("pos", 5) << pad("piece", w) << pad("mlm", w) << pad("wop", 6) << pad("seg", 4) << "mask" << '\n';
  for (std::size_t t = 0; t < ex.input_ids.size(); ++t) {
    const std::string mlm = ex.mlm_labels[t] == data::kIgnore ? "·" : piece(ex.mlm_labels[t]);
    const std::string wop = ex.wop_labels[t] == data::kIgnore ? "·" : std::to_string(ex.wop_labels[t]);
    out << pad(std::to_string(t), 5) << pad(piece(ex.input_ids[t]), w) << pad(mlm, w) << pad(wop, 6)
        << pad(std::to_string(ex.token_type_ids[t]), 4) << static_cast<int>(ex.attention_mask[t]) << '\n';
  }
  return kExitOk;
}

struct AblateArgs {
  std::string config;
  std::vector<std::string> inputs;
  std::string vocab;
  std::string combos = "MLM+SOP,MLM+SOP+WOP,MLM+WOP";
  double eval_fraction = 0.1;
  std::string json_out;
};

model::Objectives parse_combo(const std::string& text) {
  model::Objectives o;
  o.mlm = o.sop = o.wop = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('+', start), text.size());
    std::string name = text.substr(start, end - start);
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
    if (name == "MLM") {
      o.mlm = true;
    } else if (name == "SOP") {
      o.sop = true;
    } else if (name == "WOP") {
      o.wop = true;
    } else if (!name.empty() && name != "NONE") {
      fail(ErrorCode::InvalidConfig, "unknown objective '" + name + "'");
    }
    start = end + 1;
  }
  return o;
}

int cmd_ablate(const AblateArgs& a, std::ostream& out, spdlog::logger& log) {
  train::TrainConfig cfg = a.config.empty() ? train::TrainConfig{} : train::load_train_config(a.config);
  std::vector<model::Objectives> combos;
  std::size_t start = 0;
  while (start <= a.combos.size()) {
    const std::size_t end = std::min(a.combos.find(',', start), a.combos.size());
    combos.push_back(parse_combo(a.combos.substr(start, end - start)));
    start = end + 1;
  }
  const text::Vocab vocab = text::Vocab::load(a.vocab);
  cfg.model.vocab_size = vocab.size();
  const auto pairs = corpus_pairs(data::ingest(to_paths(a.inputs)), vocab, cfg.model.seq_len);
  if (!(a.eval_fraction > 0.0 && a.eval_fraction < 1.0)) fail(ErrorCode::InvalidConfig, "eval fraction must lie in (0, 1)");
  const auto held = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(a.eval_fraction * pairs.size())));
  if (pairs.size() < held + 1) fail(ErrorCode::InvalidConfig, "corpus too small for a train/eval split");
  const std::span<const data::SegmentPair> all(pairs);
  log.info("ablation over {} combinations, {} train pairs, {} held-out pairs", combos.size(), pairs.size() - held, held);
  const auto table = train::run_ablation(cfg, all.first(pairs.size() - held), all.last(held), combos);
  out << table.render();
  if (!a.json_out.empty()) {
    std::ofstream json(a.json_out);
    if (!json) fail(ErrorCode::IoError, "cannot write " + a.json_out);
    json << table.to_json().dump(2) << '\n';
  }
  return kExitOk;
}

bool numeric_failure(ErrorCode code) {
  return code == ErrorCode::NonFiniteLoss || code == ErrorCode::NonFinite || code == ErrorCode::NonFiniteGradient;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto logger = make_logger(err);
  CLI::App app{"kalbert: ALBERT-style pretraining with word order prediction"};
  app.require_subcommand(1);

  VocabArgs vocab_args;
  auto* vocab = app.add_subcommand("vocab", "Learn a subword vocabulary from text files");
  vocab->add_option("--input", vocab_args.inputs, "Corpus files")->required()->check(CLI::ExistingFile);
  vocab->add_option("--size", vocab_args.size, "Target vocabulary size")->capture_default_str();
  vocab->add_option("--out", vocab_args.out, "Output vocabulary file")->required();
  vocab->add_option("--marker", vocab_args.marker, "Continuation marker")->capture_default_str();
  vocab->add_option("--show-merges", vocab_args.show_merges, "Number of merges to print")->capture_default_str();

  PrepareArgs prepare_args;
  auto* prepare = app.add_subcommand("prepare", "Tokenize, pack and corrupt a corpus into a shard");
  prepare->add_option("--input", prepare_args.inputs, "Corpus files")->required()->check(CLI::ExistingFile);
  prepare->add_option("--vocab", prepare_args.vocab, "Vocabulary file")->required();
  prepare->add_option("--config", prepare_args.config, "Run config (JSON)");
  prepare->add_option("--out", prepare_args.out, "Output shard")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Pretrain a model");
  train_cmd->add_option("--config", train_args.config, "Run config (JSON)")->required();
  train_cmd->add_option("--data", train_args.data, "Training shards (overrides trainer.shards)");
  train_cmd->add_option("--out", train_args.out, "Output directory (overrides trainer.output_dir)");
  train_cmd->add_option("--resume", train_args.resume, "Checkpoint to continue from");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Intrinsic accuracy of a checkpoint on a shard");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", eval_args.data, "Evaluation shards")->required();
  eval->add_option("--batch-size", eval_args.batch_size, "Examples per forward pass")->capture_default_str();

  InspectArgs inspect_args;
  auto* inspect = app.add_subcommand("inspect", "Print one shard example position by position");
  inspect->add_option("--shard", inspect_args.shard, "Shard file")->required();
  inspect->add_option("--index", inspect_args.index, "Example index")->required();
  inspect->add_option("--vocab", inspect_args.vocab, "Vocabulary file")->required();

  AblateArgs ablate_args;
  auto* ablate = app.add_subcommand("ablate", "Compare objective combinations on one corpus");
  ablate->add_option("--config", ablate_args.config, "Run config (JSON)");
  ablate->add_option("--input", ablate_args.inputs, "Corpus files")->required()->check(CLI::ExistingFile);
  ablate->add_option("--vocab", ablate_args.vocab, "Vocabulary file")->required();
  ablate->add_option("--combos", ablate_args.combos, "Comma-separated combinations, e.g. MLM+SOP,MLM+WOP")
      ->capture_default_str();
  ablate->add_option("--eval-fraction", ablate_args.eval_fraction, "Held-out share of segment pairs")
      ->capture_default_str();
  ablate->add_option("--json", ablate_args.json_out, "Also write the table as JSON");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitDataError;
  }

  try {
    if (*vocab) return cmd_vocab(vocab_args, out, *logger);
    if (*prepare) return cmd_prepare(prepare_args, out, *logger);
    if (*train_cmd) return cmd_train(train_args, out, *logger);
    if (*eval) return cmd_eval(eval_args, out, *logger);
    if (*inspect) return cmd_inspect(inspect_args, out);
    if (*ablate) return cmd_ablate(ablate_args, out, *logger);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return numeric_failure(e.code()) ? kExitNumericError : kExitDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDataError;
  }
  return kExitDataError;
}

}  // namespace kalbert::cli
