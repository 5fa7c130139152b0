#include "doctest.h"

#include <cmath>
#include <random>

#include "dto/kernels.hpp"
#include "support.hpp"

using namespace dto;
using kernels::Trans;

namespace {

double at(const Matrix& m, Trans t, std::size_t i, std::size_t j) {
  return t == Trans::kNo ? m(i, j) : m(j, i);
}

// Triple loop straight from the definition.
Matrix naive_gemm(const Matrix& a, Trans ta, const Matrix& b, Trans tb) {
  const std::size_t n = ta == Trans::kNo ? a.rows() : a.cols();
  const std::size_t k = ta == Trans::kNo ? a.cols() : a.rows();
  const std::size_t m = tb == Trans::kNo ? b.cols() : b.rows();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += at(a, ta, i, p) * at(b, tb, p, j);
      c(i, j) = s;
    }
  return c;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("gemm matches the naive product for every transpose combination") {
  std::mt19937_64 rng(1);
  for (auto ta : {Trans::kNo, Trans::kYes})
    for (auto tb : {Trans::kNo, Trans::kYes}) {
      // 70x50 by 50x90: above the parallel threshold.
      const Matrix a = ta == Trans::kNo ? test::random_matrix(70, 50, rng) : test::random_matrix(50, 70, rng);
      const Matrix b = tb == Trans::kNo ? test::random_matrix(50, 90, rng) : test::random_matrix(90, 50, rng);
      Matrix par(70, 90), ser(70, 90);
      kernels::gemm(a, ta, b, tb, par);
      kernels::serial::gemm(a, ta, b, tb, ser);
      const Matrix ref = naive_gemm(a, ta, b, tb);
      CHECK(bitwise_equal(par, ser));
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(par.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
    }
}

TEST_CASE("gemm accumulate adds into the output") {
  std::mt19937_64 rng(2);
  const Matrix a = test::random_matrix(4, 3, rng), b = test::random_matrix(3, 5, rng);
  Matrix c(4, 5, 1.0);
  kernels::gemm(a, Trans::kNo, b, Trans::kNo, c, true);
  const Matrix ref = naive_gemm(a, Trans::kNo, b, Trans::kNo);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.data()[i] == doctest::Approx(ref.data()[i] + 1.0));
}

TEST_CASE("matmul helpers agree with gemm") {
  std::mt19937_64 rng(3);
  const Matrix a = test::random_matrix(6, 4, rng), b = test::random_matrix(4, 7, rng), c = test::random_matrix(7, 4, rng);
  CHECK(bitwise_equal(kernels::matmul(a, b), naive_gemm(a, Trans::kNo, b, Trans::kNo)));
  CHECK(bitwise_equal(kernels::matmul_nt(a, c), naive_gemm(a, Trans::kNo, c, Trans::kYes)));
  const Matrix d = test::random_matrix(6, 3, rng);
  CHECK(bitwise_equal(kernels::matmul_tn(a, d), naive_gemm(a, Trans::kYes, d, Trans::kNo)));
}

TEST_CASE("softmax rows are distributions and log_softmax is their log") {
  std::mt19937_64 rng(4);
  const Matrix x = test::random_matrix(200, 300, rng, 5.0);
  Matrix sp(200, 300), ss(200, 300), lp(200, 300), ls(200, 300);
  kernels::softmax_rows(x, sp);
  kernels::serial::softmax_rows(x, ss);
  kernels::log_softmax_rows(x, lp);
  kernels::serial::log_softmax_rows(x, ls);
  CHECK(bitwise_equal(sp, ss));
  CHECK(bitwise_equal(lp, ls));
  for (std::size_t i = 0; i < 200; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 300; ++j) {
      CHECK(sp(i, j) >= 0.0);
      s += sp(i, j);
      CHECK(std::exp(lp(i, j)) == doctest::Approx(sp(i, j)).epsilon(1e-12));
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax is stable for huge logits") {
  const Matrix x(1, 3, std::vector<double>{1000.0, 1000.0, -1000.0});
  Matrix out(1, 3);
  kernels::softmax_rows(x, out);
  CHECK(out(0, 0) == doctest::Approx(0.5));
  CHECK(out(0, 2) == 0.0);
}

TEST_CASE("cosine similarities match the definition and score zero rows as 0") {
  std::mt19937_64 rng(5);
  Matrix rows = test::random_matrix(2000, 16, rng);
  for (std::size_t j = 0; j < 16; ++j) rows(7, j) = 0.0;
  const Matrix q = test::random_matrix(1, 16, rng);
  const std::span<const double> query(q.data(), q.size());
  const auto par = kernels::cosine_similarities(rows, query);
  const auto ser = kernels::serial::cosine_similarities(rows, query);
  CHECK(par == ser);
  CHECK(par[7] == 0.0);
  for (std::size_t i = 0; i < 2000; i += 97) {
    double dot = 0, nr = 0, nq = 0;
    for (std::size_t j = 0; j < 16; ++j) {
      dot += rows(i, j) * q(0, j);
      nr += rows(i, j) * rows(i, j);
      nq += q(0, j) * q(0, j);
    }
    if (i != 7) CHECK(par[i] == doctest::Approx(dot / std::sqrt(nr * nq)).epsilon(1e-12));
  }
}
