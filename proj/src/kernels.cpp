#include "dto/kernels.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dto::kernels {

namespace {

struct GemmShape {
  std::size_t m, k, n;
};

GemmShape check_gemm(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c,
                     bool accumulate) {
  const std::size_t m = ta == Trans::kNo ? a.rows() : a.cols();
  const std::size_t k = ta == Trans::kNo ? a.cols() : a.rows();
  const std::size_t kb = tb == Trans::kNo ? b.rows() : b.cols();
  const std::size_t n = tb == Trans::kNo ? b.cols() : b.rows();
  if (k != kb) {
    throw std::invalid_argument("gemm: inner dimensions differ (" + a.shape_string() + " vs " +
                                b.shape_string() + ")");
  }
  if (accumulate) {
    if (c.rows() != m || c.cols() != n) {
      throw std::invalid_argument("gemm: accumulator has wrong shape");
    }
  } else if (c.rows() != m || c.cols() != n) {
    c = Matrix(m, n);
  }
  return {m, k, n};
}

// One output row. Both the serial and the parallel gemm call this, which is
// what keeps their results bitwise identical.
void gemm_row(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c, bool accumulate,
              const GemmShape& s, std::size_t i, std::vector<double>& acc) {
  acc.assign(s.n, 0.0);
  for (std::size_t p = 0; p < s.k; ++p) {
    const double aip = ta == Trans::kNo ? a(i, p) : a(p, i);
    if (aip == 0.0) continue;
    if (tb == Trans::kNo) {
      const double* brow = b.data() + p * s.n;
      for (std::size_t j = 0; j < s.n; ++j) acc[j] += aip * brow[j];
    } else {
      for (std::size_t j = 0; j < s.n; ++j) acc[j] += aip * b(j, p);
    }
  }
  double* crow = c.data() + i * s.n;
  if (accumulate) {
    for (std::size_t j = 0; j < s.n; ++j) crow[j] += acc[j];
  } else {
    for (std::size_t j = 0; j < s.n; ++j) crow[j] = acc[j];
  }
}

void softmax_row(std::span<const double> x, std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    out[j] = std::exp(x[j] - mx);
    sum += out[j];
  }
  for (double& v : out) v /= sum;
}

void log_softmax_row(std::span<const double> x, std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] - lse;
}

double cosine_row(std::span<const double> r, std::span<const double> q, double qnorm) {
  double dot = 0.0, rn = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    dot += r[j] * q[j];
    rn += r[j] * r[j];
  }
  if (rn == 0.0 || qnorm == 0.0) return 0.0;
  return dot / (std::sqrt(rn) * qnorm);
}

double norm(std::span<const double> q) {
  double s = 0.0;
  for (double v : q) s += v * v;
  return std::sqrt(s);
}

}  // namespace

void gemm(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c, bool accumulate) {
  const auto s = check_gemm(a, ta, b, tb, c, accumulate);
  const long work = static_cast<long>(s.m * s.k * s.n);
  const long m = static_cast<long>(s.m);
#pragma omp parallel if (work >= kParallelThreshold && m > 1)
  {
    std::vector<double> acc;
#pragma omp for schedule(static)
    for (long i = 0; i < m; ++i) {
      gemm_row(a, ta, b, tb, c, accumulate, s, static_cast<std::size_t>(i), acc);
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c;
  gemm(a, Trans::kNo, b, Trans::kNo, c);
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix c;
  gemm(a, Trans::kNo, b, Trans::kYes, c);
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix c;
  gemm(a, Trans::kYes, b, Trans::kNo, c);
  return c;
}

void softmax_rows(const Matrix& x, Matrix& out) {
  if (!out.same_shape(x)) out = Matrix(x.rows(), x.cols());
  const long m = static_cast<long>(x.rows());
#pragma omp parallel for schedule(static) if (static_cast<long>(x.size()) >= kParallelThreshold)
  for (long i = 0; i < m; ++i) softmax_row(x.row_span(i), out.row_span(i));
}

void log_softmax_rows(const Matrix& x, Matrix& out) {
  if (!out.same_shape(x)) out = Matrix(x.rows(), x.cols());
  const long m = static_cast<long>(x.rows());
#pragma omp parallel for schedule(static) if (static_cast<long>(x.size()) >= kParallelThreshold)
  for (long i = 0; i < m; ++i) log_softmax_row(x.row_span(i), out.row_span(i));
}

std::vector<double> cosine_similarities(const Matrix& rows, std::span<const double> query) {
  if (rows.cols() != query.size()) {
    throw std::invalid_argument("cosine_similarities: dimension mismatch");
  }
  std::vector<double> out(rows.rows());
  const double qn = norm(query);
  const long m = static_cast<long>(rows.rows());
#pragma omp parallel for schedule(static) if (static_cast<long>(rows.size()) >= kParallelThreshold)
  for (long i = 0; i < m; ++i) out[i] = cosine_row(rows.row_span(i), query, qn);
  return out;
}

namespace serial {

void gemm(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c, bool accumulate) {
  const auto s = check_gemm(a, ta, b, tb, c, accumulate);
  std::vector<double> acc;
  for (std::size_t i = 0; i < s.m; ++i) gemm_row(a, ta, b, tb, c, accumulate, s, i, acc);
}

void softmax_rows(const Matrix& x, Matrix& out) {
  if (!out.same_shape(x)) out = Matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) softmax_row(x.row_span(i), out.row_span(i));
}

void log_softmax_rows(const Matrix& x, Matrix& out) {
  if (!out.same_shape(x)) out = Matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) log_softmax_row(x.row_span(i), out.row_span(i));
}

std::vector<double> cosine_similarities(const Matrix& rows, std::span<const double> query) {
  if (rows.cols() != query.size()) {
    throw std::invalid_argument("cosine_similarities: dimension mismatch");
  }
  std::vector<double> out(rows.rows());
  const double qn = norm(query);
  for (std::size_t i = 0; i < rows.rows(); ++i) out[i] = cosine_row(rows.row_span(i), query, qn);
  return out;
}

}  // namespace serial

}  // namespace dto::kernels
