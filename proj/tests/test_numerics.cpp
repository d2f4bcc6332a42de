#include <doctest.h>

#include <cmath>
#include <random>

#include "ana/errors.hpp"
#include "ana/grad_check.hpp"
#include "ana/kernels.hpp"
#include "ana/random_maps.hpp"
#include "ana/tape.hpp"

using namespace ana;

namespace {

MatrixD naive_product(const MatrixD& a, const MatrixD& b) {
  MatrixD c(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

double max_rel(const MatrixD& a, const MatrixD& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]) / std::max(1.0, std::max(std::abs(a[i]), std::abs(b[i]))));
  return m;
}

}  // namespace

TEST_CASE("matrix construction checks length") {
  CHECK_THROWS_AS(MatrixD(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  const MatrixD m = MatrixD::from_rows({{1, 2}, {3, 4}});
  CHECK(m(1, 0) == 3);
  CHECK(m.row(1)[1] == 4);
}

TEST_CASE("matmul examples") {
  const MatrixD m = MatrixD::from_rows({{0.3, -2}, {7, 1.5}});
  CHECK(matmul(MatrixD::identity(2), m) == m);

  const MatrixD a = MatrixD::from_rows({{1, 2}, {3, 4}});
  const MatrixD b = MatrixD::from_rows({{0}, {1}});
  CHECK(matmul(a, b) == MatrixD::from_rows({{2}, {4}}));

  std::mt19937_64 rng(3);
  const MatrixD x = random_matrix<double>(5, 3, rng);
  const MatrixD y = random_matrix<double>(3, 7, rng);
  CHECK(max_abs_diff(matmul(x, y), naive_product(x, y)) <= 1e-12);
  CHECK(max_abs_diff(reference::matmul(x, y), naive_product(x, y)) <= 1e-12);
}

TEST_CASE("matmul shape error names both shapes") {
  const MatrixD a(2, 3);
  const MatrixD b(2, 3);
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("2x3") != std::string::npos);
  }
}

TEST_CASE("transposed products match explicit transposes") {
  std::mt19937_64 rng(4);
  const MatrixD a = random_matrix<double>(4, 6, rng);
  const MatrixD b = random_matrix<double>(5, 6, rng);
  MatrixD bt(6, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) bt(j, i) = b(i, j);
  CHECK(max_abs_diff(matmul_nt(a, b), naive_product(a, bt)) <= 1e-12);
  MatrixD at(6, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) at(j, i) = a(i, j);
  const MatrixD c = random_matrix<double>(4, 3, rng);
  CHECK(max_abs_diff(matmul_tn(a, c), naive_product(at, c)) <= 1e-12);
}

TEST_CASE("matmul is associative") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const MatrixD a = random_matrix<double>(4, 6, rng);
    const MatrixD b = random_matrix<double>(6, 3, rng);
    const MatrixD c = random_matrix<double>(3, 5, rng);
    CHECK(max_rel(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) <= 1e-9);
  }
}

TEST_CASE("softmax examples") {
  const MatrixD z = softmax_rows(MatrixD(1, 3, 0.0));
  for (double v : z.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const MatrixD big = softmax_rows(MatrixD::from_rows({{1000, 0, 0}}));
  CHECK(all_finite(big));
  CHECK(big(0, 0) == doctest::Approx(1.0));
  CHECK(big(0, 1) < 1e-300);

  const MatrixD s = softmax_rows(MatrixD::from_rows({{1, 2, 3}}));
  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(s(0, j) - std::exp(j + 1.0) / denom) <= 1e-9);
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> dim(1, 20);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const MatrixF m = random_matrix<float>(dim(rng), dim(rng), rng, 5.0);
    const MatrixF s = softmax_rows(m);
    for (std::size_t r = 0; r < s.rows(); ++r) {
      double sum = 0.0;
      for (float v : s.row(r)) sum += v;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("softmax does not depend on where a row sits in memory") {
  std::mt19937_64 rng(11);
  const MatrixF one = random_matrix<float>(1, 37, rng, 4.0);
  MatrixF many(9, 37);
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t c = 0; c < 37; ++c) many(r, c) = one(0, c);
  const MatrixF a = softmax_rows(one);
  const MatrixF b = softmax_rows(many);
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t c = 0; c < 37; ++c) CHECK(b(r, c) == a(0, c));
}

TEST_CASE("relu propagates NaN") {
  Tape<double> t(false);
  const Var<double> x = t.constant(MatrixD::from_rows({{std::nan(""), -1.0, 2.0}}));
  const MatrixD y = relu(x).value();
  CHECK(std::isnan(y(0, 0)));
  CHECK(y(0, 1) == 0.0);
  CHECK(y(0, 2) == 2.0);
}

TEST_CASE("column reductions match the serial reference") {
  std::mt19937_64 rng(7);
  for (std::size_t n : {1, 15, 16, 17, 300}) {
    const MatrixD a = random_matrix<double>(n + 3, n, rng);
    std::vector<double> s(n, 0.0), q(n, 0.0);
    for (std::size_t k = 0; k < a.rows(); ++k)
      for (std::size_t i = 0; i < n; ++i) {
        s[i] += a(k, i);
        q[i] += a(k, i) * a(k, i);
      }
    const auto cs = column_sums(a);
    const auto cq = column_square_sums(a);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(cs[i] == doctest::Approx(s[i]).epsilon(1e-12));
      CHECK(cq[i] == doctest::Approx(q[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("grad_check examples") {
  std::mt19937_64 rng(8);
  const MatrixD x = random_matrix<double>(3, 3, rng);
  const double err = grad_check<double>(
      [](Tape<double>&, Var<double> v) { return sum(hadamard(v, v)); }, x, 1e-5);
  CHECK(err <= 1e-7);

  const double zero = grad_check<double>(
      [](Tape<double>& t, Var<double>) { return t.constant(MatrixD(1, 1, 2.5)); }, x, 1e-5);
  CHECK(zero == 0.0);

  CHECK_THROWS_AS(grad_check<double>(
                      [](Tape<double>&, Var<double> v) {
                        return sum(scale(v, std::numeric_limits<double>::infinity()));
                      },
                      x, 1e-5),
                  EvaluationError);
}

TEST_CASE("every differentiable op passes grad_check") {
  std::mt19937_64 rng(9);
  using Fn = std::function<Var<double>(Tape<double>&, Var<double>)>;
  const MatrixD other = random_matrix<double>(4, 3, rng);
  const MatrixD square = random_matrix<double>(3, 3, rng);
  const MatrixD row = random_matrix<double>(1, 3, rng);
  const MatrixD weights = random_matrix<double>(4, 3, rng);
  // Weighted sums keep the gradient of sum-invariant ops (softmax) non-trivial.
  auto wsum = [&](Tape<double>& t, Var<double> v) { return sum(hadamard(v, t.constant(weights))); };
  const std::vector<std::pair<const char*, Fn>> ops{
      {"matmul", [&](Tape<double>& t, Var<double> v) { return sum(matmul(v, t.constant(square))); }},
      {"matmul rhs", [&](Tape<double>& t, Var<double> v) {
         return sum(matmul(t.constant(MatrixD(2, 4, 0.5)), v));
       }},
      {"matmul_nt", [&](Tape<double>& t, Var<double> v) { return sum(matmul_nt(v, t.constant(other))); }},
      {"add", [&](Tape<double>& t, Var<double> v) { return wsum(t, add(v, v)); }},
      {"add_bias", [&](Tape<double>& t, Var<double> v) { return wsum(t, add_bias(v, t.variable(row))); }},
      {"mul_cols", [&](Tape<double>& t, Var<double> v) { return wsum(t, mul_cols(v, t.constant(row))); }},
      {"hadamard", [&](Tape<double>& t, Var<double> v) { return sum(hadamard(v, t.constant(weights))); }},
      {"scale", [&](Tape<double>& t, Var<double> v) { return wsum(t, scale(v, -1.7)); }},
      {"relu", [&](Tape<double>& t, Var<double> v) { return wsum(t, relu(v)); }},
      {"softmax_rows", [&](Tape<double>& t, Var<double> v) { return wsum(t, softmax_rows(v)); }},
      {"slice_cols", [&](Tape<double>&, Var<double> v) { return sum(hadamard(slice_cols(v, 1, 2), slice_cols(v, 0, 2))); }},
      {"concat_cols", [&](Tape<double>& t, Var<double> v) {
         const Var<double> parts[] = {v, t.constant(other)};
         return sum(hadamard(concat_cols<double>(parts), concat_cols<double>(parts)));
       }},
      {"context_norm", [&](Tape<double>& t, Var<double> v) { return wsum(t, context_norm(v, 1e-3)); }},
      {"alpha_sigmoid", [&](Tape<double>& t, Var<double> v) {
         return wsum(t, alpha_sigmoid(v, t.constant(MatrixD(1, 1, 0.4))));
       }},
  };
  for (const auto& [name, f] : ops) {
    CAPTURE(name);
    MatrixD x = random_matrix<double>(4, 3, rng);
    // Keep relu inputs away from the kink.
    for (double& v : x.values())
      if (std::abs(v) < 0.05) v += 0.1;
    CHECK(grad_check<double>(f, x, 1e-6) <= 1e-5);
  }
}

TEST_CASE("alpha gradient through log_alpha") {
  std::mt19937_64 rng(10);
  const MatrixD h = random_matrix<double>(5, 2, rng);
  const double err = grad_check<double>(
      [&](Tape<double>& t, Var<double> la) { return sum(hadamard(alpha_sigmoid(t.constant(h), la), t.constant(h))); },
      MatrixD(1, 1, 0.3), 1e-6);
  CHECK(err <= 1e-5);
}

TEST_CASE("reverse sweep visits nodes in reverse order") {
  Tape<double> t;
  const Var<double> x = t.variable(MatrixD(2, 2, 1.0));
  const Var<double> c = t.constant(MatrixD(2, 2, 3.0));
  const Var<double> y = hadamard(x, c);
  const Var<double> z = relu(add(y, x));
  const Var<double> s = sum(z);
  t.backward(s);
  const auto& sweep = t.last_sweep();
  REQUIRE(!sweep.empty());
  for (std::size_t i = 1; i < sweep.size(); ++i) CHECK(sweep[i] < sweep[i - 1]);
  CHECK(sweep.front() == s.id);
  CHECK(t.gradient(c) == MatrixD(2, 2, 0.0));
  CHECK(t.gradient(x) == MatrixD(2, 2, 4.0));
}

TEST_CASE("no-grad tape evaluates without recording") {
  Tape<double> t(false);
  const MatrixD w(2, 2, 2.0);
  const Var<double> p = t.param(w);
  const Var<double> out = sum(matmul(p, p));
  CHECK(out.value()(0, 0) == doctest::Approx(32.0));
  CHECK_FALSE(t.needs_grad(out.id));
}
