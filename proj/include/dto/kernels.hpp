#pragma once

// Dense numeric kernels used by the autodiff engine, the soft bridge and
// retrieval. Every kernel has an OpenMP-parallel version (namespace
// dto::kernels) and a serial reference (dto::kernels::serial) that the tests
// and the benchmark compare against. Parallel versions split work over output
// rows only and keep the per-element accumulation order of the reference, so
// both produce bitwise-identical results.

#include <span>
#include <vector>

#include "dto/tensor.hpp"

namespace dto::kernels {

enum class Trans { kNo, kYes };

// C = op(A) * op(B) (+ C if accumulate).
void gemm(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c,
          bool accumulate = false);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // A * B^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // A^T * B

// Row-wise softmax / log-softmax.
void softmax_rows(const Matrix& x, Matrix& out);
void log_softmax_rows(const Matrix& x, Matrix& out);

// Cosine similarity of `query` with each row of `rows`. Zero-norm rows score 0.
std::vector<double> cosine_similarities(const Matrix& rows, std::span<const double> query);

// Minimum total work (multiply-adds) before a kernel goes parallel.
inline constexpr long kParallelThreshold = 1 << 15;

namespace serial {
void gemm(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c,
          bool accumulate = false);
void softmax_rows(const Matrix& x, Matrix& out);
void log_softmax_rows(const Matrix& x, Matrix& out);
std::vector<double> cosine_similarities(const Matrix& rows, std::span<const double> query);
}  // namespace serial

}  // namespace dto::kernels
