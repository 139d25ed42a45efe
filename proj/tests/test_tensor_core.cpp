#include <doctest.h>

#include <cmath>

#include "gcsa/gradcheck.hpp"
#include "gcsa/ops.hpp"
#include "gcsa/rng.hpp"
#include "gcsa/tape.hpp"
#include "gcsa/tensor.hpp"

using namespace gcsa;

namespace {

Tensor<double> random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(r, c);
  for (auto& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and hand case") {
  Rng rng(11);
  auto m = random_tensor(3, 3, rng);
  auto out = matmul_plain(Tensor<double>::identity(3), m);
  for (size_t i = 0; i < m.size(); ++i) CHECK(out.data[i] == doctest::Approx(m.data[i]));

  Tensor<double> a(2, 2, {1, 2, 3, 4});
  Tensor<double> b(2, 1, {0, 1});
  auto c = matmul_plain(a, b);
  CHECK(c.at(0, 0) == doctest::Approx(2));
  CHECK(c.at(1, 0) == doctest::Approx(4));
}

TEST_CASE("matmul shape error names both shapes") {
  Tensor<double> a(2, 3), b(2, 2);
  CHECK_THROWS_WITH_AS(matmul_plain(a, b), doctest::Contains("2x3"), ShapeError);
}

TEST_CASE("matmul gradient of sum wrt A equals ones*B^T") {
  Rng rng(7);
  auto a = random_tensor(3, 4, rng);
  auto b = random_tensor(4, 2, rng);

  Tape<double> tape;
  auto na = tape.leaf(a);
  auto nb = tape.constant(b);
  auto loss = tape.sum_all(tape.matmul(na, nb));
  tape.backward(loss);

  auto expected = matmul_plain(Tensor<double>::ones(3, 2), transpose_plain(b));
  const auto& got = tape.grad(na);
  for (size_t i = 0; i < expected.size(); ++i)
    CHECK(got.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-9));

  // Same thing via the finite-difference checker, step 1e-4.
  std::vector<ParamRef<double>> params{{"a", &a}};
  auto report = gradcheck<double>(
      [&](Tape<double>& t, const std::vector<Tape<double>::Node>& nodes) {
        return t.sum_all(t.matmul(nodes[0], t.constant(b)));
      },
      params, 1e-4);
  CHECK(report.max_rel_err < 1e-8);
}

TEST_CASE("matmul associativity on random 4x4 chains") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor(4, 4, rng);
    auto b = random_tensor(4, 4, rng);
    auto c = random_tensor(4, 4, rng);
    auto left = matmul_plain(matmul_plain(a, b), c);
    auto right = matmul_plain(a, matmul_plain(b, c));
    for (size_t i = 0; i < left.size(); ++i)
      CHECK(left.data[i] == doctest::Approx(right.data[i]).epsilon(1e-5));
  }
}

TEST_CASE("l2_normalize hand cases") {
  bool degenerate = false;
  auto v = l2_normalize(Tensor<double>::row({3, 4}), &degenerate);
  CHECK_FALSE(degenerate);
  CHECK(v.at(0, 0) == doctest::Approx(0.6));
  CHECK(v.at(0, 1) == doctest::Approx(0.8));
  CHECK(norm2(v) == doctest::Approx(1.0).epsilon(1e-6));

  auto unit = Tensor<double>::row({0, 1, 0});
  auto same = l2_normalize(unit, &degenerate);
  CHECK_FALSE(degenerate);
  for (size_t i = 0; i < unit.size(); ++i) CHECK(same.data[i] == doctest::Approx(unit.data[i]));

  auto zero = l2_normalize(Tensor<double>::row({0, 0, 0, 0}), &degenerate);
  CHECK(degenerate);
  for (double x : zero.data) CHECK(x == 0.0);
}

TEST_CASE("l2_normalize idempotent") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto v = random_tensor(1, 8, rng, -5, 5);
    auto once = l2_normalize(v);
    auto twice = l2_normalize(once);
    for (size_t i = 0; i < v.size(); ++i)
      CHECK(std::abs(once.data[i] - twice.data[i]) < 1e-6);
  }
}

TEST_CASE("cosine_sim identities") {
  Rng rng(5);
  auto u = random_tensor(1, 6, rng);
  CHECK(cosine_sim(u, u) == doctest::Approx(1.0));
  auto neg = u;
  for (auto& x : neg.data) x = -x;
  CHECK(cosine_sim(u, neg) == doctest::Approx(-1.0));
  CHECK(cosine_sim(Tensor<double>::row({1, 0}), Tensor<double>::row({0, 1})) ==
        doctest::Approx(0.0));
  CHECK_THROWS_AS(cosine_sim(Tensor<double>::row({0, 0}), u), NumericError);
  CHECK_THROWS_AS(cosine_sim(Tensor<double>::row({1, 0, 0}), Tensor<double>::row({1, 0})),
                  ShapeError);
}

TEST_CASE("softmax rows") {
  Tape<double> tape;
  auto equal = tape.constant(Tensor<double>::row({2.5, 2.5, 2.5, 2.5}));
  auto out = tape.value(tape.softmax_rows(equal));
  for (double x : out.data) CHECK(x == doctest::Approx(0.25));

  auto hand = tape.value(tape.softmax_rows(tape.constant(Tensor<double>::row({0, std::log(3.0)}))));
  CHECK(hand.at(0, 0) == doctest::Approx(0.25));
  CHECK(hand.at(0, 1) == doctest::Approx(0.75));

  auto spike = tape.value(
      tape.softmax_rows(tape.constant(Tensor<double>::row({0.0, 1e4, 3.0}))));
  CHECK(std::abs(spike.at(0, 1) - 1.0) < 1e-6);
  CHECK(spike.at(0, 0) < 1e-6);

  Rng rng(17);
  Tensor<double> big(1000, 7);
  for (auto& x : big.data) x = rng.uniform(-30, 30);
  Tape<double> tape2;
  auto sm = tape2.value(tape2.softmax_rows(tape2.constant(big)));
  for (int r = 0; r < sm.rows; ++r) {
    double sum = 0;
    for (int c = 0; c < sm.cols; ++c) {
      CHECK(sm.at(r, c) >= 0.0);
      sum += sm.at(r, c);
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("layer_norm hand cases") {
  Tape<double> tape;
  auto gain = tape.constant(Tensor<double>::ones(1, 4));
  auto bias = tape.constant(Tensor<double>::zeros(1, 4));
  auto constant_row = tape.constant(Tensor<double>::full(1, 4, 3.7));
  auto out = tape.value(tape.layer_norm_rows(constant_row, gain, bias));
  for (double x : out.data) CHECK(std::abs(x) < 1e-9);

  auto g2 = tape.constant(Tensor<double>::ones(1, 2));
  auto b2 = tape.constant(Tensor<double>::zeros(1, 2));
  auto v = tape.constant(Tensor<double>::row({1, -1}));
  auto out2 = tape.value(tape.layer_norm_rows(v, g2, b2));
  double expected = 1.0 / std::sqrt(1.0 + kLayerNormEps);
  CHECK(out2.at(0, 0) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(out2.at(0, 1) == doctest::Approx(-expected).epsilon(1e-9));

  // Unit gain, zero bias: output is standardized within 1e-5.
  Rng rng(23);
  Tensor<double> x(1, 16);
  for (auto& e : x.data) e = rng.uniform(-4, 4);
  Tape<double> t3;
  auto g3 = t3.constant(Tensor<double>::ones(1, 16));
  auto b3 = t3.constant(Tensor<double>::zeros(1, 16));
  auto y = t3.value(t3.layer_norm_rows(t3.constant(x), g3, b3));
  double mean = 0;
  for (double e : y.data) mean += e;
  mean /= y.size();
  double var = 0;
  for (double e : y.data) var += (e - mean) * (e - mean);
  var /= y.size();
  CHECK(std::abs(mean) < 1e-5);
  CHECK(std::abs(var - 1.0) < 1e-4);

  Tape<double> t4;
  CHECK_THROWS_AS(t4.layer_norm_rows(t4.constant(Tensor<double>(1, 3)),
                                     t4.constant(Tensor<double>(1, 4)),
                                     t4.constant(Tensor<double>(1, 4))),
                  ShapeError);
}

TEST_CASE("gelu values and tails") {
  Tape<double> tape;
  auto v = tape.constant(Tensor<double>::row({0.0, 10.0, -10.0}));
  auto out = tape.value(tape.gelu(v));
  CHECK(out.at(0, 0) == 0.0);
  CHECK(std::abs(out.at(0, 1) - 10.0) < 1e-6);
  CHECK(std::abs(out.at(0, 2)) < 1e-6);
}

TEST_CASE("dropout_mask contract") {
  Rng rng(99);
  auto ident = dropout_mask<double>(1, 64, 0.0, rng);
  for (double x : ident.data) CHECK(x == 1.0);

  Rng rng_a(123), rng_b(123);
  auto m1 = dropout_mask<float>(1, 1000, 0.3, rng_a);
  auto m2 = dropout_mask<float>(1, 1000, 0.3, rng_b);
  CHECK(m1.data == m2.data);

  Rng rng_c(7);
  auto big = dropout_mask<double>(1, 100000, 0.5, rng_c);
  double mean = 0;
  for (double x : big.data) mean += x;
  mean /= big.size();
  CHECK(mean == doctest::Approx(1.0).epsilon(0.02));

  CHECK_THROWS_AS(dropout_mask<double>(1, 4, 1.0, rng), ConfigError);
}

TEST_CASE("gradcheck quadratic closure is near exact") {
  Tensor<double> p(3, 2, {0.5, -1.2, 2.0, 0.1, -0.7, 1.5});
  std::vector<ParamRef<double>> params{{"p", &p}};
  auto report = gradcheck<double>(
      [](Tape<double>& t, const std::vector<Tape<double>::Node>& nodes) {
        return t.sum_all(t.mul(nodes[0], nodes[0]));
      },
      params, 1e-4);
  CHECK(report.max_rel_err < 1e-8);
}

TEST_CASE("gradcheck constant loss reports zero error") {
  Tensor<double> p(2, 2, {1, 2, 3, 4});
  std::vector<ParamRef<double>> params{{"p", &p}};
  auto report = gradcheck<double>(
      [](Tape<double>& t, const std::vector<Tape<double>::Node>&) {
        return t.constant(Tensor<double>::full(1, 1, 5.0));
      },
      params, 1e-4);
  CHECK(report.max_rel_err == 0.0);
}

// Every primitive op must pass finite differences at 64-bit on random small
// inputs, rel. err < 1e-4.
TEST_CASE("gradcheck every primitive op") {
  Rng rng(2024);
  auto a = random_tensor(3, 4, rng);
  auto b = random_tensor(3, 4, rng);
  auto m = random_tensor(4, 5, rng);
  auto gain = random_tensor(1, 4, rng, 0.5, 1.5);
  auto bias = random_tensor(1, 4, rng, -0.5, 0.5);
  // Keep relu/div inputs away from kinks and poles.
  auto pos = random_tensor(3, 4, rng, 0.2, 1.0);
  auto scores = random_tensor(5, 1, rng, -0.93, 0.93);

  using Nodes = std::vector<Tape<double>::Node>;
  struct Case {
    const char* name;
    std::vector<ParamRef<double>> params;
    std::function<Tape<double>::Node(Tape<double>&, const Nodes&)> build;
  };
  std::vector<Case> cases;
  cases.push_back({"matmul", {{"a", &a}, {"m", &m}},
                   [](Tape<double>& t, const Nodes& n) {
                     return t.sum_all(t.matmul(n[0], n[1]));
                   }});
  cases.push_back({"transpose", {{"a", &a}},
                   [&](Tape<double>& t, const Nodes& n) {
                     return t.sum_all(t.matmul(t.transpose(n[0]), t.constant(b)));
                   }});
  cases.push_back({"add_sub_mul", {{"a", &a}, {"b", &b}},
                   [](Tape<double>& t, const Nodes& n) {
                     auto s = t.add(n[0], n[1]);
                     auto d = t.sub(n[0], n[1]);
                     return t.sum_all(t.mul(s, d));
                   }});
  cases.push_back({"div_eps", {{"a", &a}, {"pos", &pos}},
                   [](Tape<double>& t, const Nodes& n) {
                     return t.sum_all(t.div_eps(n[0], n[1], 1e-12));
                   }});
  cases.push_back({"affine", {{"a", &a}},
                   [](Tape<double>& t, const Nodes& n) {
                     return t.sum_all(t.affine(n[0], -2.5, 0.75));
                   }});
  cases.push_back({"relu", {{"pos", &pos}},
                   [&](Tape<double>& t, const Nodes& n) {
                     return t.sum_all(t.mul(t.relu(n[0]), t.constant(b)));
                   }});
  cases.push_back({"gelu", {{"a", &a}},
                   [&](Tape<double>& t, const Nodes& n) {
                     return t.sum_all(t.mul(t.gelu(n[0]), t.constant(b)));
                   }});
  cases.push_back({"softmax_rows", {{"a", &a}},
                   [&](Tape<double>& t, const Nodes& n) {
                     return t.sum_all(t.mul(t.softmax_rows(n[0]), t.constant(b)));
                   }});
  cases.push_back({"layer_norm_rows", {{"a", &a}, {"gain", &gain}, {"bias", &bias}},
                   [&](Tape<double>& t, const Nodes& n) {
                     return t.sum_all(t.mul(t.layer_norm_rows(n[0], n[1], n[2]), t.constant(b)));
                   }});
  cases.push_back({"l2_normalize_rows", {{"a", &a}},
                   [&](Tape<double>& t, const Nodes& n) {
                     return t.sum_all(t.mul(t.l2_normalize_rows(n[0]), t.constant(b)));
                   }});
  cases.push_back({"concat_slice", {{"a", &a}, {"b", &b}},
                   [](Tape<double>& t, const Nodes& n) {
                     auto cat = t.concat_cols({n[0], n[1]});
                     auto left = t.slice_cols(cat, 0, 3);
                     auto rows = t.slice_rows(left, 1, 3);
                     return t.sum_all(t.mul(rows, rows));
                   }});
  cases.push_back({"add_row_bias", {{"a", &a}, {"bias", &bias}},
                   [&](Tape<double>& t, const Nodes& n) {
                     return t.sum_all(t.mul(t.add_row_bias(n[0], n[1]), t.constant(b)));
                   }});
  cases.push_back({"triangular_bins", {{"scores", &scores}},
                   [](Tape<double>& t, const Nodes& n) {
                     auto bins = t.triangular_bins(n[0], 11);
                     return t.sum_all(t.mul(bins, bins));
                   }});

  for (auto& c : cases) {
    CAPTURE(c.name);
    auto report = gradcheck<double>(c.build, c.params, 1e-5);
    CHECK_MESSAGE(report.max_rel_err < 1e-4, c.name, " rel err ", report.max_rel_err);
  }
}

TEST_CASE("tape gradient accumulation is additive across reuse") {
  Tensor<double> p(1, 2, {2.0, -3.0});
  Tape<double> tape;
  auto n = tape.leaf(p);
  // loss = sum(p*p) + sum(p) uses p twice.
  auto loss = tape.add(tape.sum_all(tape.mul(n, n)), tape.sum_all(n));
  tape.backward(loss);
  CHECK(tape.grad(n).at(0, 0) == doctest::Approx(2 * 2.0 + 1));
  CHECK(tape.grad(n).at(0, 1) == doctest::Approx(2 * -3.0 + 1));
}
