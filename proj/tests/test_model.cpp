// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "kalbert/core/error.hpp"
#include "kalbert/core/rng.hpp"
#include "kalbert/model/albert.hpp"
#include "kalbert/model/config.hpp"
#include "kalbert/model/params.hpp"
#include "support.hpp"

using namespace kalbert;
using namespace kalbert::model;
using kalbert::testing::error_of;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor<double>& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

Mat affine(const Mat& x, const Tensor<double>& w, const Tensor<double>& b) {
  Mat out(x.size(), std::vector<double>(w.cols(), 0.0));
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) {
      double acc = b[c];
      for (std::size_t k = 0; k < w.rows(); ++k) acc += x[r][k] * w.at(k, c);
      out[r][c] = acc;
    }
  return out;
}

Mat norm(const Mat& x, const Tensor<double>& g, const Tensor<double>& b, double eps) {
  Mat out = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double n = static_cast<double>(x[r].size());
    const double mean = std::accumulate(x[r].begin(), x[r].end(), 0.0) / n;
    double var = 0;
    for (double v : x[r]) var += (v - mean) * (v - mean);
    var /= n;
    for (std::size_t c = 0; c < x[r].size(); ++c) out[r][c] = (x[r][c] - mean) / std::sqrt(var + eps) * g[c] + b[c];
  }
  return out;
}

Mat add(Mat a, const Mat& b) {
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < a[r].size(); ++c) a[r][c] += b[r][c];
  return a;
}

double max_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Every parameter drawn at random so the oracles exercise biases and norms.
ParameterSet<double> random_params(const AlbertConfig& cfg, std::uint64_t seed) {
  auto params = init_params<double>(cfg, seed);
  Rng rng(seed + 1);
  for (auto& [name, t] : params.tensors()) t = testing::random_tensor<double>(t.shape(), rng, 0.3);
  return params;
}

AlbertConfig quiet(AlbertConfig cfg) {
  cfg.dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("init matches the schema and is deterministic") {
  const auto cfg = testing::tiny_config();
  const auto params = init_params<double>(cfg, 3);
  CHECK_NOTHROW(check_schema(params, cfg));
  const auto schema = parameter_schema(cfg);
  CHECK(params.num_tensors() == schema.size());
  for (const auto& spec : schema) CHECK(params.get(spec.name).shape() == spec.shape);
  CHECK(params == init_params<double>(cfg, 3));
  CHECK_FALSE(params == init_params<double>(cfg, 4));
  // Biases zero, norms at identity.
  for (const auto& spec : schema) {
    const auto& t = params.get(spec.name);
    for (double v : t.data()) {
      if (spec.kind == ParamKind::Bias || spec.kind == ParamKind::NormBeta) CHECK(v == 0.0);
      if (spec.kind == ParamKind::NormGamma) CHECK(v == 1.0);
      if (spec.kind == ParamKind::Weight) CHECK(std::abs(v) <= 0.04 + 1e-15);
    }
  }
}

TEST_CASE("init weight spread") {
  auto cfg = testing::tiny_config();
  cfg.vocab_size = 12500;
  const auto params = init_params<double>(cfg, 11);
  const auto& w = params.get(names::kWordEmb);
  REQUIRE(w.size() == 100000);
  double sum = 0, sq = 0;
  for (double v : w.data()) sum += v;
  const double mean = sum / static_cast<double>(w.size());
  for (double v : w.data()) sq += (v - mean) * (v - mean);
  const double std = std::sqrt(sq / static_cast<double>(w.size() - 1));
  CHECK(std >= 0.017);
  CHECK(std <= 0.023);
}

TEST_CASE("check_schema rejects missing and misshapen tensors") {
  const auto cfg = testing::tiny_config();
  auto params = init_params<double>(cfg, 1);
  auto missing = params;
  missing.tensors().erase(std::string(names::kSopW));
  CHECK(error_of([&] { check_schema(missing, cfg); }) == ErrorCode::MissingTensor);
  auto wrong = params;
  wrong.set(std::string(names::kSopB), Tensor<double>({3}));
  CHECK(error_of([&] { check_schema(wrong, cfg); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("parameter counts") {
  AlbertConfig base;
  const std::size_t V = 32000, E = 128, P = 512;
  auto backbone = [&](std::size_t H, std::size_t F) {
    const std::size_t emb = V * E + P * E + 2 * E + 2 * E + E * H + H;
    const std::size_t enc = 4 * (H * H + H) + 2 * H + (H * F + F) + (F * H + H) + 2 * H;
    return emb + enc + (H * H + H);
  };
  CHECK(count_params(base).backbone() == backbone(768, 3072));
  CHECK(count_params(base).backbone() == 11939584);
  CHECK(count_params(large_config()).backbone() == backbone(1024, 4096));
  CHECK(count_params(large_config()).backbone() == 17939968);
  CHECK(count_params(base).backbone() >= 11000000);
  CHECK(count_params(base).backbone() <= 13000000);
  CHECK(count_params(large_config()).backbone() >= 17000000);
  CHECK(count_params(large_config()).backbone() <= 19000000);

  auto square = testing::tiny_config();
  square.embedding_size = square.hidden_size;
  const auto H = square.hidden_size;
  CHECK(count_params(square).embeddings ==
        square.vocab_size * H + square.max_positions * H + 2 * H + 2 * H + (H * H + H));

  const auto counts = count_params(base);
  CHECK(counts.wop_head == 768 * P + P);
  CHECK(counts.sop_head == 768 * 2 + 2);
  CHECK(counts.mlm_head == (768 * E + E) + 2 * E + V);
  const auto tiny = testing::tiny_config();
  CHECK(count_params(tiny).total() == init_params<double>(tiny, 0).num_elements());
}

TEST_CASE("encoder size is independent of depth") {
  auto one = testing::tiny_config();
  one.num_layers = 1;
  auto many = one;
  many.num_layers = 24;
  CHECK(count_params(one).encoder == count_params(many).encoder);
  CHECK(count_params(one).total() == count_params(many).total());
}

TEST_CASE("disabling an objective drops its head") {
  auto cfg = testing::tiny_config();
  const auto full = count_params(cfg).total();
  cfg.objectives.wop = false;
  CHECK(full - count_params(cfg).total() == cfg.hidden_size * cfg.max_positions + cfg.max_positions);
  CHECK_FALSE(init_params<double>(cfg, 0).contains(names::kWopW));
}

TEST_CASE("forward shapes") {
  auto cfg = testing::tiny_config();
  cfg.seq_len = 8;
  const auto params = init_params<double>(cfg, 2);
  const auto examples = testing::random_examples(cfg, 2, 4);
  const auto batch = make_batch(examples);
  const auto out = forward(params, cfg, batch);
  CHECK(out.hidden.shape() == Shape{2, 8, 16});
  REQUIRE(out.mlm_logits);
  CHECK(out.mlm_logits->shape() == Shape{2, 8, 50});
  REQUIRE(out.sop_logits);
  CHECK(out.sop_logits->shape() == Shape{2, 2});
  REQUIRE(out.wop_logits);
  CHECK(out.wop_logits->shape() == Shape{2, 8, 16});
}

TEST_CASE("forward rejects bad inputs") {
  const auto cfg = testing::tiny_config();
  const auto params = init_params<double>(cfg, 2);
  auto examples = testing::random_examples(cfg, 2, 4);
  auto bad = examples;
  bad[0].input_ids[1] = 50;
  CHECK(error_of([&] { forward(params, cfg, make_batch(bad)); }) == ErrorCode::TokenIdOutOfRange);
  bad = examples;
  bad[1].token_type_ids[0] = 2;
  CHECK(error_of([&] { forward(params, cfg, make_batch(bad)); }) == ErrorCode::TokenIdOutOfRange);
  auto longer = testing::tiny_config();
  longer.seq_len = 16;
  longer.max_positions = 32;
  auto long_examples = testing::random_examples(longer, 1, 5);
  for (auto& ex : long_examples) {
    ex.input_ids.resize(20, 0);
    ex.token_type_ids.resize(20, 0);
    ex.attention_mask.resize(20, 0);
    ex.mlm_labels.resize(20, -1);
    ex.wop_labels.resize(20, -1);
  }
  CHECK(error_of([&] { forward(params, cfg, make_batch(long_examples)); }) == ErrorCode::ShapeMismatch);
  bad = examples;
  bad[1].input_ids.pop_back();
  CHECK(error_of([&] { make_batch(bad); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("pad tokens do not influence real positions") {
  const auto cfg = testing::tiny_config();
  const auto params = init_params<double>(cfg, 8);
  auto examples = testing::random_examples(cfg, 6, 9);
  const auto base = forward(params, cfg, make_batch(examples));
  auto changed = examples;
  std::size_t edits = 0;
  for (auto& ex : changed)
    for (std::size_t i = 0; i < ex.seq_len(); ++i)
      if (!ex.attention_mask[i]) {
        ex.input_ids[i] = 7 + static_cast<int>(i % 30);
        ++edits;
      }
  REQUIRE(edits > 0);
  const auto out = forward(params, cfg, make_batch(changed));
  const std::size_t T = cfg.seq_len;
  for (std::size_t b = 0; b < examples.size(); ++b)
    for (std::size_t t = 0; t < T; ++t) {
      if (!examples[b].attention_mask[t]) continue;
      for (std::size_t v = 0; v < cfg.vocab_size; ++v)
        CHECK(std::abs(out.mlm_logits->at(b * T + t, v) - base.mlm_logits->at(b * T + t, v)) <= 1e-6);
      for (std::size_t p = 0; p < cfg.max_positions; ++p)
        CHECK(std::abs(out.wop_logits->at(b * T + t, p) - base.wop_logits->at(b * T + t, p)) <= 1e-6);
    }
  CHECK(max_diff(*out.sop_logits, *base.sop_logits) <= 1e-6);
}

TEST_CASE("one layer equals embed then the shared layer") {
  auto cfg = quiet(testing::tiny_config());
  cfg.num_layers = 1;
  const auto params = random_params(cfg, 12);
  const auto batch = make_batch(testing::random_examples(cfg, 3, 13));
  const auto out = forward(params, cfg, batch);
  const auto manual = apply_shared_layer(params, cfg, embed(params, cfg, batch), batch.attention_mask, batch.batch,
                                         batch.seq);
  CHECK(max_diff(out.hidden.reshaped({batch.batch * batch.seq, cfg.hidden_size}), manual) <= 1e-12);
}

TEST_CASE("single position single head layer oracle") {
  auto cfg = quiet(testing::tiny_config());
  cfg.num_heads = 1;
  const auto params = random_params(cfg, 21);
  Rng rng(22);
  const auto x = testing::random_tensor<double>({1, cfg.hidden_size}, rng);
  const std::vector<std::uint8_t> mask = {1};
  const auto out = apply_shared_layer(params, cfg, x, mask, 1, 1);
  auto p = [&](std::string_view n) -> const Tensor<double>& { return params.get(n); };
  const double eps = cfg.layer_norm_eps;
  const Mat h = to_mat(x);
  const Mat attn = affine(affine(h, p(names::kValueW), p(names::kValueB)), p(names::kAttnOutW), p(names::kAttnOutB));
  const Mat h1 = norm(add(h, attn), p(names::kAttnNormGamma), p(names::kAttnNormBeta), eps);
  Mat inner = affine(h1, p(names::kFfnInW), p(names::kFfnInB));
  for (auto& row : inner)
    for (double& v : row) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  const Mat h2 = norm(add(h1, affine(inner, p(names::kFfnOutW), p(names::kFfnOutB))), p(names::kFfnNormGamma),
                      p(names::kFfnNormBeta), eps);
  for (std::size_t c = 0; c < cfg.hidden_size; ++c) CHECK(out.at(0, c) == doctest::Approx(h2[0][c]).epsilon(1e-10));
}

TEST_CASE("two layer applications differ from one") {
  const auto cfg = quiet(testing::tiny_config());
  const auto params = random_params(cfg, 31);
  Rng rng(32);
  const std::size_t B = 2, T = 5;
  const auto x = testing::random_tensor<double>({B * T, cfg.hidden_size}, rng);
  const std::vector<std::uint8_t> mask(B * T, 1);
  const auto once = apply_shared_layer(params, cfg, x, mask, B, T);
  const auto twice = apply_shared_layer(params, cfg, once, mask, B, T);
  CHECK(max_diff(once, twice) > 1e-6);
}

TEST_CASE("decoder is tied to the word embedding") {
  const auto cfg = quiet(testing::tiny_config());
  auto params = init_params<double>(cfg, 41);
  const auto batch = make_batch(testing::random_examples(cfg, 2, 42));
  const auto before = forward(params, cfg, batch);
  // Perturb a row that is never an input token so only the decoder path sees it.
  std::vector<bool> used(cfg.vocab_size, false);
  for (int id : batch.input_ids) used[static_cast<std::size_t>(id)] = true;
  std::size_t row = cfg.vocab_size;
  for (std::size_t v = cfg.vocab_size; v-- > 0;)
    if (!used[v]) {
      row = v;
      break;
    }
  REQUIRE(row < cfg.vocab_size);
  auto& w = params.get(names::kWordEmb);
  // A constant shift would vanish against the normalized transform output.
  Rng noise(43);
  for (std::size_t c = 0; c < cfg.embedding_size; ++c) w.at(row, c) += 0.5 * noise.normal();
  const auto after = forward(params, cfg, batch);
  CHECK(max_diff(before.hidden, after.hidden) == 0.0);
  double delta = 0;
  for (std::size_t r = 0; r < batch.batch * batch.seq; ++r)
    delta = std::max(delta, std::abs(after.mlm_logits->at(r, row) - before.mlm_logits->at(r, row)));
  CHECK(delta > 1e-6);
}

TEST_CASE("softmax rows of every head sum to one") {
  const auto cfg = testing::tiny_config();
  const auto params = init_params<double>(cfg, 51);
  const auto out = forward(params, cfg, make_batch(testing::random_examples(cfg, 4, 52)));
  for (const auto* logits : {&*out.mlm_logits, &*out.sop_logits, &*out.wop_logits}) {
    for (std::size_t r = 0; r < logits->rows(); ++r) {
      const auto row = logits->row(r);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0;
      for (double v : row) z += std::exp(v - mx);
      double s = 0;
      for (double v : row) s += std::exp(v - mx) / z;
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("total loss is the exact sum of objective losses") {
  const auto cfg = testing::tiny_config();
  const auto params = init_params<double>(cfg, 61);
  corruption::CorruptionConfig c;
  c.p_wop = 1;
  c.wop_rate = 0.5;
  const auto out = forward(params, cfg, make_batch(testing::random_examples(cfg, 8, 62, c)));
  REQUIRE(out.mlm);
  REQUIRE(out.sop);
  REQUIRE(out.wop);
  REQUIRE(out.wop->labeled > 0);
  const double expected = (out.mlm->loss + out.sop->loss) + out.wop->loss;
  CHECK(out.total_loss == expected);
  const auto m = compute_metrics(out);
  CHECK(m.loss_total == expected);
  CHECK(m.loss_mlm == out.mlm->loss);
}

TEST_CASE("initial losses sit near the uniform limit") {
  const auto cfg = testing::tiny_config();
  const auto params = init_params<double>(cfg, 71);
  corruption::CorruptionConfig c;
  c.p_wop = 1;
  c.wop_rate = 0.5;
  const auto out = forward(params, cfg, make_batch(testing::random_examples(cfg, 64, 72, c)));
  CHECK(std::abs(out.mlm->loss - std::log(50.0)) <= 0.05 * std::log(50.0));
  CHECK(std::abs(out.sop->loss - std::log(2.0)) <= 0.10 * std::log(2.0));
  CHECK(std::abs(out.wop->loss - std::log(16.0)) <= 0.05 * std::log(16.0));
}

TEST_CASE("untrained sop accuracy is near chance") {
  const auto cfg = testing::tiny_config();
  const auto params = init_params<double>(cfg, 81);
  std::size_t correct = 0, labeled = 0;
  for (int chunk = 0; chunk < 20; ++chunk) {
    auto examples = testing::random_examples(cfg, 500, 1000 + chunk);
    // Balance the labels exactly.
    for (std::size_t i = 0; i < examples.size(); ++i) {
      auto& ex = examples[i];
      const int want = static_cast<int>(i % 2);
      if (ex.sop_label != want) ex.sop_label = want;
    }
    const auto out = forward(params, cfg, make_batch(examples), {.training = false, .keep_logits = false});
    correct += out.sop->correct;
    labeled += out.sop->labeled;
  }
  REQUIRE(labeled >= 10000);
  const double acc = static_cast<double>(correct) / static_cast<double>(labeled);
  CHECK(acc >= 0.45);
  CHECK(acc <= 0.55);
}

TEST_CASE("saturated logits give perfect accuracy") {
  const auto cfg = testing::tiny_config();
  auto params = init_params<double>(cfg, 91);
  auto& w = params.get(names::kSopW);
  for (double& v : w.data()) v = 0;
  params.get(names::kSopB)[1] = 50.0;
  auto examples = testing::random_examples(cfg, 10, 92);
  for (auto& ex : examples) ex.sop_label = 1;
  const auto m = compute_metrics(forward(params, cfg, make_batch(examples)));
  REQUIRE(m.acc_sop);
  CHECK(*m.acc_sop == 1.0);
}

TEST_CASE("disabled objectives are absent from metrics") {
  auto cfg = testing::tiny_config();
  cfg.objectives.wop = false;
  const auto params = init_params<double>(cfg, 101);
  corruption::CorruptionConfig c;
  c.enable_wop = false;
  const auto out = forward(params, cfg, make_batch(testing::random_examples(cfg, 4, 102, c)));
  CHECK_FALSE(out.wop_logits);
  const auto m = compute_metrics(out);
  CHECK_FALSE(m.loss_wop);
  CHECK_FALSE(m.acc_wop);
  CHECK(m.loss_mlm);
  CHECK(m.acc_sop);
}

TEST_CASE("channels without labels contribute nothing") {
  const auto cfg = testing::tiny_config();
  const auto params = init_params<double>(cfg, 111);
  corruption::CorruptionConfig c;
  c.p_wop = 0;
  const auto out = forward(params, cfg, make_batch(testing::random_examples(cfg, 4, 112, c)));
  REQUIRE(out.wop);
  CHECK(out.wop->labeled == 0);
  CHECK(out.total_loss == out.mlm->loss + out.sop->loss);
}

TEST_CASE("full model gradients match finite differences") {
  const auto cfg = quiet(testing::tiny_config());
  auto params = init_params<double>(cfg, 121);
  corruption::CorruptionConfig c;
  c.p_wop = 1;
  c.wop_rate = 0.5;
  const auto batch = make_batch(testing::random_examples(cfg, 3, 122, c));
  Rng rng(0);
  Gradients<double> grads;
  forward_backward(params, cfg, batch, {.training = false, .keep_logits = false}, rng, grads);
  Rng pick(123);
  const double h = 1e-4;
  double worst = 0;
  for (auto& [name, tensor] : params.tensors()) {
    const auto& g = grads.at(name);
    REQUIRE(g.shape() == tensor.shape());
    for (int k = 0; k < 6; ++k) {
      const std::size_t i = pick.uniform_index(tensor.size());
      const double saved = tensor[i];
      auto loss_at = [&](double offset) {
        tensor[i] = saved + offset;
        return forward(params, cfg, batch, {.training = false, .keep_logits = false}).total_loss;
      };
      // Fourth-order central stencil.
      const double numeric = (8 * (loss_at(h) - loss_at(-h)) - (loss_at(2 * h) - loss_at(-2 * h))) / (12 * h);
      tensor[i] = saved;
      worst = std::max(worst, testing::rel_error(g[i], numeric));
    }
  }
  CHECK(worst < 1e-4);
}
