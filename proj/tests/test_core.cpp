// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "kalbert/core/ops.hpp"
#include "kalbert/core/rng.hpp"
#include "kalbert/core/tape.hpp"
#include "kalbert/core/tensor.hpp"
#include "support.hpp"

using namespace kalbert;
using kalbert::testing::error_of;
using kalbert::testing::random_tensor;
using kalbert::testing::rel_error;

namespace {

template <Real T>
Tensor<T> matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
  return Tensor<T>({rows, cols}, std::move(values));
}

// Naive triple loop, independent of the blocked kernels.
Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<double> c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.at(i, j) = acc;
    }
  return c;
}

// Maclaurin series of erf in long double.
long double erf_series(long double x) {
  long double sum = 0, term = x;
  for (int n = 0; n < 200; ++n) {
    sum += term / (2 * n + 1);
    term *= -x * x / (n + 1);
  }
  return 2 * sum / std::sqrt(std::numbers::pi_v<long double>);
}

template <Real T>
using Builder = std::function<Var(Tape<T>&, const std::vector<Var>&)>;

template <Real T>
T weighted_sum(Tape<T>& tape, Var out, const Tensor<T>& weights, Var* loss) {
  const Var w = tape.constant(weights);
  *loss = ops::sum(tape, ops::mul(tape, out, w));
  return tape.value(*loss)[0];
}

// Largest relative error between analytic gradients and central
// differences over `samples` random input coordinates.
template <Real T>
double gradient_error(const Builder<T>& build, const std::vector<Tensor<T>>& inputs, std::size_t samples, double h,
                      double floor, std::uint64_t seed = 7) {
  Rng rng(seed);
  Tensor<T> weights;
  {
    Tape<T> probe(false);
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(probe.input(x));
    weights = random_tensor<T>(probe.value(build(probe, vars)).shape(), rng);
  }
  Tape<T> tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.input(x, true));
  Var loss;
  weighted_sum(tape, build(tape, vars), weights, &loss);
  tape.backward(loss);

  auto eval = [&](const std::vector<Tensor<T>>& xs) {
    Tape<T> t(false);
    std::vector<Var> vs;
    for (const auto& x : xs) vs.push_back(t.input(x));
    // Reduce in double so float32 rounding of the sum stays out of the oracle.
    const auto& out = t.value(build(t, vs));
    double acc = 0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * static_cast<double>(weights[i]);
    return acc;
  };
  double worst = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t which = rng.uniform_index(inputs.size());
    const std::size_t idx = rng.uniform_index(inputs[which].size());
    auto plus = inputs, minus = inputs;
    plus[which][idx] += static_cast<T>(h);
    minus[which][idx] -= static_cast<T>(h);
    const double actual_h = (static_cast<double>(plus[which][idx]) - static_cast<double>(minus[which][idx])) / 2;
    const double numeric = (eval(plus) - eval(minus)) / (2 * actual_h);
    const double analytic = static_cast<double>(tape.grad(vars[which])[idx]);
    worst = std::max(worst, rel_error(analytic, numeric, floor));
  }
  return worst;
}

template <Real T>
std::vector<Tensor<T>> randoms(std::initializer_list<Shape> shapes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor<T>> out;
  for (const auto& s : shapes) out.push_back(random_tensor<T>(s, rng));
  return out;
}

// Each case returns the worst gradient error for the requested precision.
template <Real T>
double check_op(const std::string& name) {
  const bool f64 = std::is_same_v<T, double>;
  const double h = f64 ? 1e-5 : 1e-2;
  const double floor = f64 ? 1e-6 : 1e-2;
  const std::size_t n = 120;
  if (name == "matmul") {
    return gradient_error<T>([](Tape<T>& t, const std::vector<Var>& v) { return ops::matmul(t, v[0], v[1]); },
                             randoms<T>({{10, 12}, {12, 11}}, 1), n, h, floor);
  }
  if (name == "matmul_transposed") {
    return gradient_error<T>(
        [](Tape<T>& t, const std::vector<Var>& v) { return ops::matmul_transposed(t, v[0], v[1]); },
        randoms<T>({{10, 12}, {11, 12}}, 2), n, h, floor);
  }
  if (name == "add") {
    return gradient_error<T>([](Tape<T>& t, const std::vector<Var>& v) { return ops::add(t, v[0], v[1]); },
                             randoms<T>({{10, 12}, {10, 12}}, 3), n, h, floor);
  }
  if (name == "mul") {
    return gradient_error<T>([](Tape<T>& t, const std::vector<Var>& v) { return ops::mul(t, v[0], v[1]); },
                             randoms<T>({{10, 12}, {10, 12}}, 4), n, h, floor);
  }
  if (name == "add_bias") {
    return gradient_error<T>([](Tape<T>& t, const std::vector<Var>& v) { return ops::add_bias(t, v[0], v[1]); },
                             randoms<T>({{10, 12}, {12}}, 5), n, h, floor);
  }
  if (name == "scale") {
    return gradient_error<T>([](Tape<T>& t, const std::vector<Var>& v) { return ops::scale(t, v[0], T(-1.7)); },
                             randoms<T>({{10, 12}}, 6), n, h, floor);
  }
  if (name == "gelu") {
    return gradient_error<T>([](Tape<T>& t, const std::vector<Var>& v) { return ops::gelu(t, v[0]); },
                             randoms<T>({{10, 12}}, 7), n, h, floor);
  }
  if (name == "tanh") {
    return gradient_error<T>([](Tape<T>& t, const std::vector<Var>& v) { return ops::tanh(t, v[0]); },
                             randoms<T>({{10, 12}}, 8), n, h, floor);
  }
  if (name == "softmax") {
    return gradient_error<T>([](Tape<T>& t, const std::vector<Var>& v) { return ops::softmax(t, v[0]); },
                             randoms<T>({{10, 12}}, 9), n, h, floor);
  }
  if (name == "layer_norm") {
    return gradient_error<T>(
        [](Tape<T>& t, const std::vector<Var>& v) { return ops::layer_norm(t, v[0], v[1], v[2], T(1e-5)); },
        randoms<T>({{10, 12}, {12}, {12}}, 10), n, h, floor);
  }
  if (name == "gather_rows") {
    static const std::vector<std::int32_t> idx = {3, 1, 3, 0, 7, 7, 2, 9, 5, 3};
    return gradient_error<T>(
        [](Tape<T>& t, const std::vector<Var>& v) { return ops::gather_rows(t, v[0], std::span(idx)); },
        randoms<T>({{10, 12}}, 11), n, h, floor);
  }
  if (name == "masked_cross_entropy") {
    static const std::vector<std::int32_t> labels = {3, -1, 0, 11, -1, 5, 5, -1, 2, 9};
    return gradient_error<T>(
        [](Tape<T>& t, const std::vector<Var>& v) {
          return ops::masked_cross_entropy(t, v[0], std::span(labels)).loss;
        },
        randoms<T>({{10, 12}}, 12), n, h, floor);
  }
  if (name == "dropout") {
    return gradient_error<T>(
        [](Tape<T>& t, const std::vector<Var>& v) {
          Rng rng(99);
          return ops::dropout(t, v[0], 0.3, true, rng);
        },
        randoms<T>({{10, 12}}, 13), n, h, floor);
  }
  if (name == "multi_head_attention") {
    // batch 2, seq 5, hidden 12, 3 heads; last two keys of example 1 masked.
    static const std::vector<std::uint8_t> mask = {1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
    return gradient_error<T>(
        [](Tape<T>& t, const std::vector<Var>& v) {
          Rng rng(5);
          return ops::multi_head_attention(t, v[0], v[1], v[2], std::span(mask), {2, 5, 3}, 0.2, true, rng);
        },
        randoms<T>({{10, 12}, {10, 12}, {10, 12}}, 14), n, h, floor);
  }
  FAIL("unknown op " << name);
  return 1;
}

const std::vector<std::string> kOps = {"matmul", "matmul_transposed", "add", "mul", "add_bias", "scale",
                                       "gelu", "tanh", "softmax", "layer_norm", "gather_rows",
                                       "masked_cross_entropy", "dropout", "multi_head_attention"};

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor<double> t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(error_of([] { Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}); }) == ErrorCode::ShapeMismatch);
  CHECK(parse_dtype("float64") == DType::float64);
  CHECK(to_string(DType::float32) == "float32");
  CHECK(error_of([] { parse_dtype("int8"); }) == ErrorCode::InvalidConfig);
  CHECK(t.cast<float>().shape() == t.shape());
}

TEST_CASE("rng is deterministic and roughly uniform") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(1);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[c.uniform_index(7)];
  for (int k : counts) CHECK(std::abs(k - 10000) < 500);
  Rng d(3);
  const std::string state = d.state();
  const auto first = d.next_u64();
  d.restore(state);
  CHECK(d.next_u64() == first);
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("matmul examples") {
  Tape<double> tape(false);
  const auto id = tape.input(matrix<double>(2, 2, {1, 0, 0, 1}));
  const auto b = tape.input(matrix<double>(2, 2, {3, 4, 5, 6}));
  CHECK(tape.value(ops::matmul(tape, id, b)) == matrix<double>(2, 2, {3, 4, 5, 6}));
  const auto zero = tape.input(Tensor<double>({2, 2}));
  CHECK(tape.value(ops::matmul(tape, zero, b)) == Tensor<double>({2, 2}));
  const auto row = tape.input(matrix<double>(1, 2, {1, 2}));
  const auto col = tape.input(matrix<double>(2, 1, {3, 4}));
  const auto oracle = naive_matmul(matrix<double>(1, 2, {1, 2}), matrix<double>(2, 1, {3, 4}));
  CHECK(tape.value(ops::matmul(tape, row, col)) == oracle);
  CHECK(oracle[0] == 11);
  CHECK(error_of([&] { ops::matmul(tape, row, row); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("matmul agrees with a naive triple loop on random inputs") {
  Rng rng(11);
  for (const auto& [m, k, n] : std::vector<std::tuple<int, int, int>>{{1, 1, 1}, {3, 7, 5}, {17, 9, 33}}) {
    const auto a = random_tensor<double>({std::size_t(m), std::size_t(k)}, rng);
    const auto b = random_tensor<double>({std::size_t(k), std::size_t(n)}, rng);
    Tape<double> tape(false);
    const auto got = tape.value(ops::matmul(tape, tape.input(a), tape.input(b)));
    const auto want = naive_matmul(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("gelu examples") {
  CHECK(ops::gelu_value(0.0) == 0.0);
  CHECK(std::abs(ops::gelu_value(-20.0)) < 1e-12);
  const double oracle = static_cast<double>(0.5L * (1.0L + erf_series(1.0L / std::sqrt(2.0L))));
  CHECK(std::abs(ops::gelu_value(1.0) - oracle) < 1e-10);
  Tape<double> tape(false);
  const auto out = tape.value(ops::gelu(tape, tape.input(Tensor<double>({3}, std::vector<double>{0, -20, 1}))));
  CHECK(out[0] == 0.0);
  CHECK(std::abs(out[2] - oracle) < 1e-10);
}

TEST_CASE("softmax examples and invariants") {
  Tape<double> tape(false);
  auto sm = [&](std::vector<double> v) {
    const std::size_t n = v.size();
    return tape.value(ops::softmax(tape, tape.input(Tensor<double>({1, n}, std::move(v)))));
  };
  auto a = sm({0, 0});
  CHECK(a[0] == doctest::Approx(0.5));
  CHECK(a[1] == doctest::Approx(0.5));
  auto b = sm({1000, 1000});
  CHECK(b[0] == doctest::Approx(0.5));
  CHECK(b[1] == doctest::Approx(0.5));
  auto c = sm({std::log(2.0), 0});
  CHECK(c[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Rng rng(3);
  const auto z = random_tensor<double>({20, 9}, rng, 3.0);
  auto shifted = z;
  for (double& v : shifted.data()) v += 123.25;
  const auto p = tape.value(ops::softmax(tape, tape.input(z)));
  const auto q = tape.value(ops::softmax(tape, tape.input(shifted)));
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0;
    for (double v : p.row(r)) s += v;
    CHECK(std::abs(s - 1) < 1e-6);
  }
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-7);
}

TEST_CASE("layer_norm examples") {
  Tape<double> tape(false);
  const auto ones = tape.input(Tensor<double>({2}, std::vector<double>{1, 1}));
  const auto zeros = tape.input(Tensor<double>({2}));
  const auto constant = tape.value(
      ops::layer_norm(tape, tape.input(Tensor<double>({1, 2}, std::vector<double>{5, 5})), ones, zeros, 1e-12));
  CHECK(constant[0] == 0.0);
  CHECK(constant[1] == 0.0);
  const auto standard = tape.value(
      ops::layer_norm(tape, tape.input(Tensor<double>({1, 2}, std::vector<double>{1, -1})), ones, zeros, 0.0));
  CHECK(standard[0] == doctest::Approx(1.0));
  CHECK(standard[1] == doctest::Approx(-1.0));
  Rng rng(2);
  const auto beta = Tensor<double>({3}, std::vector<double>{0.5, -2, 7});
  const auto out = tape.value(ops::layer_norm(tape, tape.input(random_tensor<double>({4, 3}, rng)),
                                              tape.input(Tensor<double>({3})), tape.input(beta), 1e-12));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(out.at(r, c) == beta[c]);
}

TEST_CASE("masked cross entropy examples") {
  Tape<double> tape(false);
  const auto logits = tape.input(Tensor<double>({2, 4}));
  const std::vector<std::int32_t> none = {-1, -1};
  CHECK(error_of([&] { ops::masked_cross_entropy(tape, logits, std::span(none)); }) == ErrorCode::EmptyLabelSet);
  const std::vector<std::int32_t> one = {2, -1};
  const auto uniform = ops::masked_cross_entropy(tape, logits, std::span(one));
  CHECK(tape.value(uniform.loss)[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(uniform.labeled == 1);
  const std::vector<std::int32_t> bad = {4, -1};
  CHECK(error_of([&] { ops::masked_cross_entropy(tape, logits, std::span(bad)); }) == ErrorCode::LabelOutOfRange);

  Tensor<double> saturated({1, 4});
  saturated[1] = 1000;
  const std::vector<std::int32_t> label = {1};
  const auto sat = ops::masked_cross_entropy(tape, tape.input(saturated), std::span(label));
  CHECK(tape.value(sat.loss)[0] < 1e-6);
  CHECK(sat.correct == 1);
}

TEST_CASE("masked cross entropy with every row labeled equals the direct formula") {
  Rng rng(8);
  const auto z = random_tensor<double>({6, 5}, rng, 2.0);
  std::vector<std::int32_t> labels;
  for (int i = 0; i < 6; ++i) labels.push_back(static_cast<std::int32_t>(rng.uniform_index(5)));
  double direct = 0;
  for (std::size_t r = 0; r < 6; ++r) {
    double norm = 0;
    for (double v : z.row(r)) norm += std::exp(v);
    direct -= z.at(r, labels[r]) - std::log(norm);
  }
  direct /= 6;
  Tape<double> tape(false);
  const auto ce = ops::masked_cross_entropy(tape, tape.input(z), std::span(labels));
  CHECK(tape.value(ce.loss)[0] == doctest::Approx(direct).epsilon(1e-12));
  CHECK(ce.labeled == 6);
}

TEST_CASE("backward examples") {
  Tape<double> tape;
  const auto x = tape.input(Tensor<double>({1}, std::vector<double>{3}), true);
  const auto unused = tape.input(Tensor<double>({2}, std::vector<double>{1, 2}), true);
  const auto y = ops::sum(tape, ops::mul(tape, x, x));
  tape.backward(y);
  CHECK(tape.grad(x)[0] == 6.0);
  CHECK(tape.grad(unused) == Tensor<double>({2}));
  CHECK(tape.grad(unused).shape() == tape.value(unused).shape());
  CHECK(error_of([&] { tape.backward(unused); }) == ErrorCode::NotScalarLoss);
}

TEST_CASE("backward visits each recorded op once") {
  Tape<double> tape;
  Rng rng(4);
  const auto a = tape.input(random_tensor<double>({3, 4}, rng), true);
  const auto b = tape.input(random_tensor<double>({4, 2}, rng), true);
  const auto h = ops::tanh(tape, ops::matmul(tape, a, b));   // 2 ops
  const auto g = ops::gelu(tape, h);                         // 1 op
  const auto loss = ops::sum(tape, ops::add(tape, g, h));    // 2 ops
  tape.backward(loss);
  CHECK(tape.backward_visits() == 5);
}

TEST_CASE("random three-layer composition matches finite differences") {
  const double err = gradient_error<double>(
      [](Tape<double>& t, const std::vector<Var>& v) {
        Var h = ops::tanh(t, ops::add_bias(t, ops::matmul(t, v[0], v[1]), v[2]));
        h = ops::gelu(t, ops::matmul(t, h, v[3]));
        return ops::softmax(t, ops::matmul(t, h, v[4]));
      },
      randoms<double>({{6, 5}, {5, 7}, {7}, {7, 6}, {6, 4}}, 21), 150, 1e-5, 1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("every differentiable op matches finite differences in float64") {
  for (const auto& name : kOps) {
    CAPTURE(name);
    CHECK(check_op<double>(name) < 1e-6);
  }
}

TEST_CASE("every differentiable op matches finite differences in float32") {
  for (const auto& name : kOps) {
    CAPTURE(name);
    CHECK(check_op<float>(name) < 1e-2);
  }
}

TEST_CASE("dropout examples") {
  Tape<double> tape(false);
  Rng rng(1);
  Rng rng_b(1);
  const auto x = tape.input(Tensor<double>({100000}, 1.0));
  CHECK(tape.value(ops::dropout(tape, x, 0.0, true, rng)) == tape.value(x));
  CHECK(tape.value(ops::dropout(tape, x, 0.5, false, rng)) == tape.value(x));
  CHECK(error_of([&] { ops::dropout(tape, x, 1.0, true, rng); }) == ErrorCode::InvalidProbability);
  CHECK(error_of([&] { ops::dropout(tape, x, -0.1, true, rng); }) == ErrorCode::InvalidProbability);
  Rng fixed(2024);
  const auto out = tape.value(ops::dropout(tape, x, 0.5, true, fixed));
  double mean = 0;
  for (double v : out.data()) mean += v;
  mean /= static_cast<double>(out.size());
  CHECK(mean >= 0.98);
  CHECK(mean <= 1.02);
  Rng again(2024);
  CHECK(tape.value(ops::dropout(tape, x, 0.5, true, again)) == out);
}

TEST_CASE("attention gives masked keys zero weight") {
  // Changing values at masked key positions leaves every output unchanged.
  Rng rng(6);
  const std::vector<std::uint8_t> mask = {1, 1, 0, 0};
  auto q = random_tensor<double>({4, 4}, rng), k = random_tensor<double>({4, 4}, rng);
  auto v = random_tensor<double>({4, 4}, rng);
  Tape<double> tape(false);
  Rng unused(0);
  const auto base = tape.value(ops::multi_head_attention(tape, tape.input(q), tape.input(k), tape.input(v),
                                                         std::span(mask), {1, 4, 2}, 0.0, false, unused));
  for (std::size_t c = 0; c < 4; ++c) {
    v.at(2, c) += 50;
    k.at(3, c) -= 9;
  }
  const auto moved = tape.value(ops::multi_head_attention(tape, tape.input(q), tape.input(k), tape.input(v),
                                                          std::span(mask), {1, 4, 2}, 0.0, false, unused));
  CHECK(base == moved);
}

TEST_CASE("tape rejects non-finite values") {
  Tape<double> tape;
  Tensor<double> bad({2});
  bad[1] = std::numeric_limits<double>::infinity();
  CHECK(error_of([&] { tape.input(bad); }) == ErrorCode::NonFinite);
  const auto big = tape.input(Tensor<double>({1}, std::vector<double>{1e200}));
  CHECK(error_of([&] { ops::mul(tape, big, big); }) == ErrorCode::NonFinite);
}
