// Serial reference vs OpenMP kernels: wall time and speedup, plus a check
// that both produce identical output.
//
//   dto_bench [repeats]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>

#include "dto/kernels.hpp"

namespace {

using dto::Matrix;
namespace k = dto::kernels;

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double best_ms(int repeats, const std::function<void()>& f) {
  double best = 1e300;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-28s serial %9.3f ms  parallel %9.3f ms  speedup %5.2fx  %s\n", name.c_str(),
              serial_ms, parallel_ms, serial_ms / parallel_ms, identical ? "identical" : "MISMATCH");
}

bool same(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  std::printf("threads: %d, best of %d\n", omp_get_max_threads(), repeats);
  std::mt19937_64 rng(42);
  bool ok = true;

  for (std::size_t n : {64, 256, 512}) {
    const Matrix a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
    Matrix cs(n, n), cp(n, n);
    const double s = best_ms(repeats, [&] { k::serial::gemm(a, k::Trans::kNo, b, k::Trans::kNo, cs); });
    const double p = best_ms(repeats, [&] { k::gemm(a, k::Trans::kNo, b, k::Trans::kNo, cp); });
    ok &= same(cs, cp);
    report("gemm " + std::to_string(n) + "x" + std::to_string(n), s, p, same(cs, cp));
  }

  for (std::size_t rows : {256, 4096}) {
    const Matrix x = random_matrix(rows, 1000, rng);
    Matrix os(rows, 1000), op(rows, 1000);
    const double s = best_ms(repeats, [&] { k::serial::log_softmax_rows(x, os); });
    const double p = best_ms(repeats, [&] { k::log_softmax_rows(x, op); });
    ok &= same(os, op);
    report("log_softmax " + std::to_string(rows) + "x1000", s, p, same(os, op));
  }

  for (std::size_t rows : {1000, 100000}) {
    const Matrix store = random_matrix(rows, 256, rng);
    const Matrix q = random_matrix(1, 256, rng);
    std::vector<double> rs, rp;
    const std::span<const double> query(q.data(), q.size());
    const double s = best_ms(repeats, [&] { rs = k::serial::cosine_similarities(store, query); });
    const double p = best_ms(repeats, [&] { rp = k::cosine_similarities(store, query); });
    ok &= rs == rp;
    report("cosine " + std::to_string(rows) + "x256", s, p, rs == rp);
  }
  return ok ? 0 : 1;
}
