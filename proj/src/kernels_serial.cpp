#include "depmt/kernels.hpp"

#include <cassert>
#include <cmath>

// Serial reference kernels. Plain loops, no pragmas; the unit tests assert
// that the OpenMP implementations reproduce these bitwise.

namespace depmt {
namespace kern {
namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  assert(a.cols == b.rows);
  const int m = a.rows, k = a.cols, n = b.cols;
  if (!accumulate || c.rows != m || c.cols != n) c.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = c[i][j];
      for (int kk = 0; kk < k; ++kk) s += a[i][kk] * b[kk][j];
      c[i][j] = s;
    }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  assert(a.cols == b.cols);
  const int m = a.rows, k = a.cols, n = b.rows;
  if (!accumulate || c.rows != m || c.cols != n) c.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = c[i][j];
      for (int kk = 0; kk < k; ++kk) s += a[i][kk] * b[j][kk];
      c[i][j] = s;
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  assert(a.rows == b.rows);
  const int m = a.cols, k = a.rows, n = b.cols;
  if (!accumulate || c.rows != m || c.cols != n) c.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int kk = 0; kk < k; ++kk)
      for (int j = 0; j < n; ++j) c[i][j] += a[kk][i] * b[kk][j];
}

void add_row_bias(Matrix& x, const Matrix& bias) {
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) x[i][j] += bias[0][j];
}

void relu(const Matrix& x, Matrix& y) {
  y.resize(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) y[i][j] = x[i][j] > 0.0 ? x[i][j] : 0.0;
}

void relu_backward(const Matrix& x, const Matrix& dy, Matrix& dx, bool accumulate) {
  if (!accumulate) dx.resize(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) dx[i][j] += x[i][j] > 0.0 ? dy[i][j] : 0.0;
}

static void softmax_span(const double* s, double* p, int n) {
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
  for (int i = 0; i < scores.rows; ++i) softmax_span(scores[i], probs[i], scores.cols);
}

void softmax_rows_causal(const Matrix& scores, Matrix& probs) {
  assert(scores.rows == scores.cols);
  probs.resize(scores.rows, scores.cols);
  for (int i = 0; i < scores.rows; ++i) {
    softmax_span(scores[i], probs[i], i + 1);
    for (int j = i + 1; j < scores.cols; ++j) probs[i][j] = 0.0;
  }
}

void softmax_backward(const Matrix& probs, const Matrix& dprobs, Matrix& dscores, bool accumulate) {
  if (!accumulate) dscores.resize(probs.rows, probs.cols);
  for (int i = 0; i < probs.rows; ++i) {
    double dot = 0.0;
    for (int j = 0; j < probs.cols; ++j) dot += probs[i][j] * dprobs[i][j];
    for (int j = 0; j < probs.cols; ++j) dscores[i][j] += probs[i][j] * (dprobs[i][j] - dot);
  }
}

void layernorm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& y, Matrix& mean, Matrix& rstd) {
  const int n = x.cols;
  y.resize(x.rows, n);
  mean.resize(x.rows, 1);
  rstd.resize(x.rows, 1);
  for (int i = 0; i < x.rows; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += x[i][j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (x[i][j] - mu) * (x[i][j] - mu);
    var /= n;
    const double rs = 1.0 / std::sqrt(var + 1e-6);
    mean[i][0] = mu;
    rstd[i][0] = rs;
    for (int j = 0; j < n; ++j) y[i][j] = (x[i][j] - mu) * rs * gain[0][j] + bias[0][j];
  }
}

void layernorm_backward(const Matrix& x, const Matrix& gain, const Matrix& mean, const Matrix& rstd,
                        const Matrix& dy, Matrix& dx, Matrix& dgain, Matrix& dbias, bool accumulate_dx) {
  const int n = x.cols;
  if (!accumulate_dx) dx.resize(x.rows, n);
  for (int i = 0; i < x.rows; ++i) {
    const double mu = mean[i][0];
    const double rs = rstd[i][0];
    double sum_dg = 0.0;
    double sum_dgx = 0.0;
    for (int j = 0; j < n; ++j) {
      const double xhat = (x[i][j] - mu) * rs;
      const double dg = dy[i][j] * gain[0][j];
      sum_dg += dg;
      sum_dgx += dg * xhat;
      dgain[0][j] += dy[i][j] * xhat;
      dbias[0][j] += dy[i][j];
    }
    for (int j = 0; j < n; ++j) {
      const double xhat = (x[i][j] - mu) * rs;
      dx[i][j] += rs * (dy[i][j] * gain[0][j] - sum_dg / n - xhat * sum_dgx / n);
    }
  }
}

}  // namespace serial
}  // namespace kern
}  // namespace depmt
