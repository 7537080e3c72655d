// Times the OpenMP kernels against the serial reference across a few shapes
// and reports the speedup. Run with --quick for a smoke-sized sweep.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <omp.h>

#include "depmt/kernels.hpp"
#include "depmt/rng.hpp"

using namespace depmt;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (double& x : m.data) x = rng.sym(1.0);
  return m;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    best = dt < best ? dt : best;
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  bool quick = false;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--quick") == 0) quick = true;

  std::vector<int> sizes = quick ? std::vector<int>{64, 128} : std::vector<int>{64, 128, 256, 512, 1024};
  const int reps = quick ? 2 : 5;

  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-10s %6s %12s %12s %8s\n", "kernel", "n", "serial_s", "omp_s", "speedup");

  Rng rng(42);
  for (int n : sizes) {
    Matrix a = random_matrix(n, n, rng);
    Matrix b = random_matrix(n, n, rng);
    Matrix c1, c2;

    double ts = time_best_of(reps, [&] { kern::serial::matmul(a, b, c1); });
    double tp = time_best_of(reps, [&] { kern::matmul(a, b, c2); });
    if (!bitwise_equal(c1, c2)) {
      std::fprintf(stderr, "matmul mismatch at n=%d\n", n);
      return 1;
    }
    std::printf("%-10s %6d %12.6f %12.6f %8.2f\n", "matmul", n, ts, tp, ts / tp);

    ts = time_best_of(reps, [&] { kern::serial::softmax_rows(a, c1); });
    tp = time_best_of(reps, [&] { kern::softmax_rows(a, c2); });
    if (!bitwise_equal(c1, c2)) {
      std::fprintf(stderr, "softmax mismatch at n=%d\n", n);
      return 1;
    }
    std::printf("%-10s %6d %12.6f %12.6f %8.2f\n", "softmax", n, ts, tp, ts / tp);

    Matrix gain(1, n, 1.0), bias(1, n, 0.0), mean, rstd;
    ts = time_best_of(reps, [&] { kern::serial::layernorm(a, gain, bias, c1, mean, rstd); });
    tp = time_best_of(reps, [&] { kern::layernorm(a, gain, bias, c2, mean, rstd); });
    if (!bitwise_equal(c1, c2)) {
      std::fprintf(stderr, "layernorm mismatch at n=%d\n", n);
      return 1;
    }
    std::printf("%-10s %6d %12.6f %12.6f %8.2f\n", "layernorm", n, ts, tp, ts / tp);
  }
  return 0;
}
