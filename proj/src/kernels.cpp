#include "depmt/kernels.hpp"

#include <cassert>
#include <cmath>

// OpenMP-parallel kernel implementations. Parallelism is always over output
// rows; the k-accumulation order inside every output element matches the
// serial reference exactly, so the two are bitwise interchangeable. The
// if-clauses keep tiny matrices on one thread where the fork overhead would
// dominate.

namespace depmt {
namespace kern {

static constexpr long kParallelCutoff = 64 * 1024;  // flops, roughly

void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  assert(a.cols == b.rows);
  const int m = a.rows, k = a.cols, n = b.cols;
  if (!accumulate || c.rows != m || c.cols != n) c.resize(m, n);
  const long work = static_cast<long>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    const double* ai = a[i];
    double* ci = c[i];
    for (int kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      const double* bk = b[kk];
      for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  assert(a.cols == b.cols);
  const int m = a.rows, k = a.cols, n = b.rows;
  if (!accumulate || c.rows != m || c.cols != n) c.resize(m, n);
  const long work = static_cast<long>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    const double* ai = a[i];
    double* ci = c[i];
    for (int j = 0; j < n; ++j) {
      const double* bj = b[j];
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
      ci[j] += s;
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  assert(a.rows == b.rows);
  const int m = a.cols, k = a.rows, n = b.cols;
  if (!accumulate || c.rows != m || c.cols != n) c.resize(m, n);
  const long work = static_cast<long>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    double* ci = c[i];
    for (int kk = 0; kk < k; ++kk) {
      const double av = a[kk][i];
      const double* bk = b[kk];
      for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

void add_row_bias(Matrix& x, const Matrix& bias) {
  assert(bias.rows == 1 && bias.cols == x.cols);
  const double* b = bias[0];
#pragma omp parallel for schedule(static) if (x.size() > kParallelCutoff)
  for (int i = 0; i < x.rows; ++i) {
    double* xi = x[i];
    for (int j = 0; j < x.cols; ++j) xi[j] += b[j];
  }
}

void relu(const Matrix& x, Matrix& y) {
  y.resize(x.rows, x.cols);
#pragma omp parallel for schedule(static) if (x.size() > kParallelCutoff)
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x[i];
    double* yi = y[i];
    for (int j = 0; j < x.cols; ++j) yi[j] = xi[j] > 0.0 ? xi[j] : 0.0;
  }
}

void relu_backward(const Matrix& x, const Matrix& dy, Matrix& dx, bool accumulate) {
  assert(x.same_shape(dy));
  if (!accumulate) dx.resize(x.rows, x.cols);
#pragma omp parallel for schedule(static) if (x.size() > kParallelCutoff)
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x[i];
    const double* di = dy[i];
    double* oi = dx[i];
    for (int j = 0; j < x.cols; ++j) oi[j] += xi[j] > 0.0 ? di[j] : 0.0;
  }
}

static inline void softmax_span(const double* s, double* p, int n) {
  double mx = s[0];
  for (int j = 1; j < n; ++j) mx = s[j] > mx ? s[j] : mx;
  double z = 0.0;
  for (int j = 0; j < n; ++j) {
    p[j] = std::exp(s[j] - mx);
    z += p[j];
  }
  const double inv = 1.0 / z;
  for (int j = 0; j < n; ++j) p[j] *= inv;
}

void softmax_rows(const Matrix& scores, Matrix& probs) {
  probs.resize(scores.rows, scores.cols);
#pragma omp parallel for schedule(static) if (scores.size() > 8192)
  for (int i = 0; i < scores.rows; ++i) softmax_span(scores[i], probs[i], scores.cols);
}

void softmax_rows_causal(const Matrix& scores, Matrix& probs) {
  assert(scores.rows == scores.cols);
  probs.resize(scores.rows, scores.cols);
#pragma omp parallel for schedule(static) if (scores.size() > 8192)
  for (int i = 0; i < scores.rows; ++i) {
    softmax_span(scores[i], probs[i], i + 1);
    for (int j = i + 1; j < scores.cols; ++j) probs[i][j] = 0.0;
  }
}

void softmax_backward(const Matrix& probs, const Matrix& dprobs, Matrix& dscores, bool accumulate) {
  assert(probs.same_shape(dprobs));
  if (!accumulate) dscores.resize(probs.rows, probs.cols);
#pragma omp parallel for schedule(static) if (probs.size() > 8192)
  for (int i = 0; i < probs.rows; ++i) {
    const double* p = probs[i];
    const double* d = dprobs[i];
    double* o = dscores[i];
    double dot = 0.0;
    for (int j = 0; j < probs.cols; ++j) dot += p[j] * d[j];
    for (int j = 0; j < probs.cols; ++j) o[j] += p[j] * (d[j] - dot);
  }
}

void layernorm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& y, Matrix& mean, Matrix& rstd) {
  assert(gain.rows == 1 && gain.cols == x.cols && bias.cols == x.cols);
  const int n = x.cols;
  y.resize(x.rows, n);
  mean.resize(x.rows, 1);
  rstd.resize(x.rows, 1);
  const double* g = gain[0];
  const double* b = bias[0];
#pragma omp parallel for schedule(static) if (x.size() > 8192)
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x[i];
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xi[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xi[j] - mu;
      var += d * d;
    }
    var /= n;
    const double rs = 1.0 / std::sqrt(var + 1e-6);
    mean[i][0] = mu;
    rstd[i][0] = rs;
    double* yi = y[i];
    for (int j = 0; j < n; ++j) yi[j] = (xi[j] - mu) * rs * g[j] + b[j];
  }
}

void layernorm_backward(const Matrix& x, const Matrix& gain, const Matrix& mean, const Matrix& rstd,
                        const Matrix& dy, Matrix& dx, Matrix& dgain, Matrix& dbias, bool accumulate_dx) {
  const int n = x.cols;
  if (!accumulate_dx) dx.resize(x.rows, n);
  const double* g = gain[0];
  // dgain/dbias are accumulated serially: they reduce over rows and the
  // reduction order must not depend on the thread count.
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x[i];
    const double* di = dy[i];
    double* oi = dx[i];
    const double mu = mean[i][0];
    const double rs = rstd[i][0];
    double sum_dg = 0.0;    // sum of dy * gain
    double sum_dgx = 0.0;   // sum of dy * gain * xhat
    for (int j = 0; j < n; ++j) {
      const double xhat = (xi[j] - mu) * rs;
      const double dg = di[j] * g[j];
      sum_dg += dg;
      sum_dgx += dg * xhat;
      dgain[0][j] += di[j] * xhat;
      dbias[0][j] += di[j];
    }
    for (int j = 0; j < n; ++j) {
      const double xhat = (xi[j] - mu) * rs;
      oi[j] += rs * (di[j] * g[j] - sum_dg / n - xhat * sum_dgx / n);
    }
  }
}

}  // namespace kern
}  // namespace depmt
