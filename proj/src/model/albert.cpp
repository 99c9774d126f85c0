// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#include "kalbert/model/albert.hpp"

#include <string>

#include "kalbert/core/ops.hpp"
#include "kalbert/core/tape.hpp"

namespace kalbert::model {

Batch make_batch(std::span<const data::CorruptedExample> examples) {
  Batch b;
  b.batch = examples.size();
  if (examples.empty()) return b;
  b.seq = examples.front().input_ids.size();
  const std::size_t n = b.batch * b.seq;
  b.input_ids.reserve(n);
  b.token_type_ids.reserve(n);
  b.attention_mask.reserve(n);
  b.mlm_labels.reserve(n);
  b.wop_labels.reserve(n);
  for (const auto& ex : examples) {
    const std::size_t t = ex.input_ids.size();
    if (t != b.seq || ex.token_type_ids.size() != t || ex.attention_mask.size() != t || ex.mlm_labels.size() != t ||
        ex.wop_labels.size() != t) {
      fail(ErrorCode::ShapeMismatch, "batch examples disagree in sequence length");
    }
    b.input_ids.insert(b.input_ids.end(), ex.input_ids.begin(), ex.input_ids.end());
    b.token_type_ids.insert(b.token_type_ids.end(), ex.token_type_ids.begin(), ex.token_type_ids.end());
    b.attention_mask.insert(b.attention_mask.end(), ex.attention_mask.begin(), ex.attention_mask.end());
    b.mlm_labels.insert(b.mlm_labels.end(), ex.mlm_labels.begin(), ex.mlm_labels.end());
    b.wop_labels.insert(b.wop_labels.end(), ex.wop_labels.begin(), ex.wop_labels.end());
    b.sop_labels.push_back(ex.sop_label);
  }
  return b;
}

namespace {

void check_batch(const AlbertConfig& cfg, const Batch& batch) {
  const std::size_t n = batch.batch * batch.seq;
  if (batch.batch == 0 || batch.seq == 0) fail(ErrorCode::ShapeMismatch, "empty batch");
  if (batch.seq > cfg.max_positions) {
    fail(ErrorCode::ShapeMismatch, "sequence length " + std::to_string(batch.seq) + " exceeds max_positions " +
                                       std::to_string(cfg.max_positions));
  }
  if (batch.input_ids.size() != n || batch.token_type_ids.size() != n || batch.attention_mask.size() != n ||
      batch.mlm_labels.size() != n || batch.wop_labels.size() != n || batch.sop_labels.size() != batch.batch) {
    fail(ErrorCode::ShapeMismatch, "batch channels disagree with batch x seq");
  }
  for (const std::int32_t id : batch.input_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
      fail(ErrorCode::TokenIdOutOfRange,
           "token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(cfg.vocab_size));
    }
  }
  for (const std::int32_t id : batch.token_type_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.type_vocab) {
      fail(ErrorCode::TokenIdOutOfRange, "token type " + std::to_string(id) + " out of range");
    }
  }
}

/// Builds the graph on a tape. Parameters are watched, never copied.
template <Real T>
class Graph {
 public:
  Graph(Tape<T>& tape, const ParameterSet<T>& params, const AlbertConfig& cfg, bool training, Rng& rng)
      : tape_(tape), params_(params), cfg_(cfg), training_(training), rng_(rng) {}

  Var param(std::string_view name) {
    const std::string key(name);
    const auto it = vars_.find(key);
    if (it != vars_.end()) return it->second;
    const Var v = tape_.watch(params_.get(name), true);
    vars_.emplace(key, v);
    return v;
  }

  const std::map<std::string, Var, std::less<>>& watched() const { return vars_; }

  Var linear(Var x, std::string_view w, std::string_view b) {
    return ops::add_bias(tape_, ops::matmul(tape_, x, param(w)), param(b));
  }

  Var norm(Var x, std::string_view gamma, std::string_view beta) {
    return ops::layer_norm(tape_, x, param(gamma), param(beta), static_cast<T>(cfg_.layer_norm_eps));
  }

  Var drop(Var x) { return ops::dropout(tape_, x, cfg_.dropout, training_, rng_); }

  Var embed(const Batch& batch) {
    using namespace names;
    std::vector<std::int32_t> positions(batch.batch * batch.seq);
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<std::int32_t>(i % batch.seq);
    Var x = ops::gather_rows(tape_, param(kWordEmb), std::span<const std::int32_t>(batch.input_ids));
    x = ops::add(tape_, x, ops::gather_rows(tape_, param(kPosEmb), std::span<const std::int32_t>(positions)));
    x = ops::add(tape_, x,
                 ops::gather_rows(tape_, param(kTypeEmb), std::span<const std::int32_t>(batch.token_type_ids)));
    x = norm(x, kEmbNormGamma, kEmbNormBeta);
    x = drop(x);
    return linear(x, kEmbProjW, kEmbProjB);
  }

  Var layer(Var h, std::span<const std::uint8_t> mask, std::size_t batch, std::size_t seq) {
    using namespace names;
    const Var q = linear(h, kQueryW, kQueryB);
    const Var k = linear(h, kKeyW, kKeyB);
    const Var v = linear(h, kValueW, kValueB);
    const ops::AttentionLayout layout{batch, seq, cfg_.num_heads};
    Var a = ops::multi_head_attention(tape_, q, k, v, mask, layout, cfg_.dropout, training_, rng_);
    a = drop(linear(a, kAttnOutW, kAttnOutB));
    const Var h1 = norm(ops::add(tape_, h, a), kAttnNormGamma, kAttnNormBeta);
    Var f = ops::gelu(tape_, linear(h1, kFfnInW, kFfnInB));
    f = drop(linear(f, kFfnOutW, kFfnOutB));
    return norm(ops::add(tape_, h1, f), kFfnNormGamma, kFfnNormBeta);
  }

  Var mlm_logits(Var rows) {
    using namespace names;
    Var t = ops::gelu(tape_, linear(rows, kMlmTransformW, kMlmTransformB));
    t = norm(t, kMlmNormGamma, kMlmNormBeta);
    return ops::add_bias(tape_, ops::matmul_transposed(tape_, t, param(kWordEmb)), param(kMlmDecoderBias));
  }

  Var sop_logits(Var hidden, std::size_t batch, std::size_t seq) {
    using namespace names;
    std::vector<std::int32_t> cls(batch);
    for (std::size_t b = 0; b < batch; ++b) cls[b] = static_cast<std::int32_t>(b * seq);
    const Var first = ops::gather_rows(tape_, hidden, std::span<const std::int32_t>(cls));
    const Var pooled = ops::tanh(tape_, linear(first, kPoolerW, kPoolerB));
    return linear(pooled, kSopW, kSopB);
  }

  Var wop_logits(Var rows) { return linear(rows, names::kWopW, names::kWopB); }

 private:
  Tape<T>& tape_;
  const ParameterSet<T>& params_;
  const AlbertConfig& cfg_;
  bool training_;
  Rng& rng_;
  std::map<std::string, Var, std::less<>> vars_;
};

std::vector<std::int32_t> labeled_rows(std::span<const std::int32_t> labels) {
  std::vector<std::int32_t> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != data::kIgnore) rows.push_back(static_cast<std::int32_t>(i));
  }
  return rows;
}

std::vector<std::int32_t> compact_labels(std::span<const std::int32_t> labels) {
  std::vector<std::int32_t> out;
  for (const std::int32_t l : labels) {
    if (l != data::kIgnore) out.push_back(l);
  }
  return out;
}

/// Cross entropy over one channel. Returns the loss Var, or an invalid Var
/// when nothing is labeled.
template <Real T>
Var score(Tape<T>& tape, Var logits, std::span<const std::int32_t> labels, ObjectiveStats& stats) {
  bool any = false;
  for (const std::int32_t l : labels) any = any || l != data::kIgnore;
  if (!any) return Var{};
  const auto ce = ops::masked_cross_entropy(tape, logits, labels, data::kIgnore);
  stats.loss = static_cast<double>(tape.value(ce.loss)[0]);
  stats.correct = ce.correct;
  stats.labeled = ce.labeled;
  return ce.loss;
}

template <Real T>
Tensor<T> shaped(const Tensor<T>& t, Shape shape) {
  return t.reshaped(std::move(shape));
}

template <Real T>
struct Pass {
  ForwardOutput<T> out;
  Var total;
};

template <Real T>
Pass<T> run(Tape<T>& tape, Graph<T>& g, const AlbertConfig& cfg, const Batch& batch, const ForwardOptions& options) {
  check_batch(cfg, batch);
  const std::size_t B = batch.batch, S = batch.seq;
  const std::span<const std::uint8_t> mask(batch.attention_mask);

  Var h = g.embed(batch);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) h = g.layer(h, mask, B, S);

  Pass<T> pass;
  ForwardOutput<T>& out = pass.out;
  out.hidden = shaped(tape.value(h), {B, S, cfg.hidden_size});

  std::vector<Var> losses;
  auto push_loss = [&](Var loss, double weight) {
    if (!loss.valid()) return;
    losses.push_back(weight == 1.0 ? loss : ops::scale(tape, loss, static_cast<T>(weight)));
  };

  if (cfg.objectives.mlm) {
    out.mlm.emplace();
    const std::span<const std::int32_t> labels(batch.mlm_labels);
    if (options.keep_logits) {
      const Var logits = g.mlm_logits(h);
      out.mlm_logits = shaped(tape.value(logits), {B, S, cfg.vocab_size});
      push_loss(score(tape, logits, labels, *out.mlm), cfg.objectives.mlm_weight);
    } else {
      const auto rows = labeled_rows(labels);
      if (!rows.empty()) {
        const Var logits = g.mlm_logits(ops::gather_rows(tape, h, std::span<const std::int32_t>(rows)));
        const auto compact = compact_labels(labels);
        push_loss(score(tape, logits, std::span<const std::int32_t>(compact), *out.mlm),
                  cfg.objectives.mlm_weight);
      }
    }
  }
  if (cfg.objectives.sop) {
    out.sop.emplace();
    const Var logits = g.sop_logits(h, B, S);
    if (options.keep_logits) out.sop_logits = tape.value(logits);
    push_loss(score(tape, logits, std::span<const std::int32_t>(batch.sop_labels), *out.sop),
              cfg.objectives.sop_weight);
  }
  if (cfg.objectives.wop) {
    out.wop.emplace();
    const std::span<const std::int32_t> labels(batch.wop_labels);
    if (options.keep_logits) {
      const Var logits = g.wop_logits(h);
      out.wop_logits = shaped(tape.value(logits), {B, S, cfg.max_positions});
      push_loss(score(tape, logits, labels, *out.wop), cfg.objectives.wop_weight);
    } else {
      const auto rows = labeled_rows(labels);
      if (!rows.empty()) {
        const Var logits = g.wop_logits(ops::gather_rows(tape, h, std::span<const std::int32_t>(rows)));
        const auto compact = compact_labels(labels);
        push_loss(score(tape, logits, std::span<const std::int32_t>(compact), *out.wop),
                  cfg.objectives.wop_weight);
      }
    }
  }

  for (const Var loss : losses) pass.total = pass.total.valid() ? ops::add(tape, pass.total, loss) : loss;
  out.total_loss = pass.total.valid() ? tape.value(pass.total)[0] : T{0};
  return pass;
}

}  // namespace

template <Real T>
ForwardOutput<T> forward(const ParameterSet<T>& params, const AlbertConfig& cfg, const Batch& batch,
                         const ForwardOptions& options, Rng* rng) {
  if (options.training && rng == nullptr) fail(ErrorCode::InvalidConfig, "training forward needs an rng");
  Rng unused(0);
  Tape<T> tape(false);
  Graph<T> g(tape, params, cfg, options.training, rng != nullptr ? *rng : unused);
  return run(tape, g, cfg, batch, options).out;
}

template <Real T>
ForwardOutput<T> forward_backward(const ParameterSet<T>& params, const AlbertConfig& cfg, const Batch& batch,
                                  const ForwardOptions& options, Rng& rng, Gradients<T>& gradients) {
  Tape<T> tape(true);
  Graph<T> g(tape, params, cfg, options.training, rng);
  Pass<T> pass = run(tape, g, cfg, batch, options);
  if (pass.total.valid()) tape.backward(pass.total);
  gradients.clear();
  for (const auto& [name, tensor] : params.tensors()) {
    const auto it = g.watched().find(name);
    if (it == g.watched().end()) {
      gradients.emplace(name, Tensor<T>(tensor.shape()));
    } else {
      gradients.emplace(name, tape.grad(it->second));
    }
  }
  return std::move(pass.out);
}

template <Real T>
Tensor<T> embed(const ParameterSet<T>& params, const AlbertConfig& cfg, const Batch& batch) {
  check_batch(cfg, batch);
  Rng unused(0);
  Tape<T> tape(false);
  Graph<T> g(tape, params, cfg, false, unused);
  return tape.value(g.embed(batch));
}

template <Real T>
Tensor<T> apply_shared_layer(const ParameterSet<T>& params, const AlbertConfig& cfg, const Tensor<T>& hidden,
                             std::span<const std::uint8_t> attention_mask, std::size_t batch, std::size_t seq) {
  if (hidden.rows() != batch * seq || hidden.cols() != cfg.hidden_size || attention_mask.size() != batch * seq) {
    fail(ErrorCode::ShapeMismatch, "hidden " + shape_to_string(hidden.shape()) + " does not match batch " +
                                       std::to_string(batch) + " x seq " + std::to_string(seq) + " x " +
                                       std::to_string(cfg.hidden_size));
  }
  Rng unused(0);
  Tape<T> tape(false);
  Graph<T> g(tape, params, cfg, false, unused);
  const Var h = tape.watch(hidden, false);
  return tape.value(g.layer(h, attention_mask, batch, seq));
}

template <Real T>
MetricsFragment compute_metrics(const ForwardOutput<T>& output) {
  MetricsFragment m;
  if (output.mlm) {
    m.loss_mlm = output.mlm->loss;
    m.acc_mlm = output.mlm->accuracy();
    m.loss_total += *m.loss_mlm;
  }
  if (output.sop) {
    m.loss_sop = output.sop->loss;
    m.acc_sop = output.sop->accuracy();
    m.loss_total += *m.loss_sop;
  }
  if (output.wop) {
    m.loss_wop = output.wop->loss;
    m.acc_wop = output.wop->accuracy();
    m.loss_total += *m.loss_wop;
  }
  return m;
}

#define KALBERT_INSTANTIATE(T)                                                                                  \
  template ForwardOutput<T> forward<T>(const ParameterSet<T>&, const AlbertConfig&, const Batch&,              \
                                       const ForwardOptions&, Rng*);                                            \
  template ForwardOutput<T> forward_backward<T>(const ParameterSet<T>&, const AlbertConfig&, const Batch&,     \
                                                const ForwardOptions&, Rng&, Gradients<T>&);                    \
  template Tensor<T> embed<T>(const ParameterSet<T>&, const AlbertConfig&, const Batch&);                      \
  template Tensor<T> apply_shared_layer<T>(const ParameterSet<T>&, const AlbertConfig&, const Tensor<T>&,      \
                                           std::span<const std::uint8_t>, std::size_t, std::size_t);           \
  template MetricsFragment compute_metrics<T>(const ForwardOutput<T>&);

KALBERT_INSTANTIATE(float)
KALBERT_INSTANTIATE(double)

#undef KALBERT_INSTANTIATE

}  // namespace kalbert::model
