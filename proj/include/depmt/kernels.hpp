#ifndef DEPMT_KERNELS_HPP
#define DEPMT_KERNELS_HPP

#include "depmt/matrix.hpp"

// Compute kernels behind the transformer. The primary implementations in
// depmt::kern are OpenMP-parallel over output rows; every output element is
// produced by exactly one thread with a fixed inner accumulation order, so
// results are bitwise identical to the serial reference in depmt::kern::serial
// regardless of thread count. The serial versions are kept for testing and
// for the kernel benchmark.

namespace depmt {
namespace kern {

// C = A * B            A: m x k, B: k x n, C: m x n
void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
// C = A * B^T          A: m x k, B: n x k, C: m x n
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
// C = A^T * B          A: k x m, B: k x n, C: m x n
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);

// y[r] = x[r] + bias for every row
void add_row_bias(Matrix& x, const Matrix& bias);

// y = max(x, 0); backward uses the forward input to gate the gradient
void relu(const Matrix& x, Matrix& y);
void relu_backward(const Matrix& x, const Matrix& dy, Matrix& dx, bool accumulate = false);

// Row-wise softmax. The causal variant restricts row i to columns <= i and
// writes exact zeros elsewhere.
void softmax_rows(const Matrix& scores, Matrix& probs);
void softmax_rows_causal(const Matrix& scores, Matrix& probs);
// dscores = probs .* (dprobs - rowsum(dprobs .* probs)); valid for both the
// plain and causal forward since masked cells carry probs == 0.
void softmax_backward(const Matrix& probs, const Matrix& dprobs, Matrix& dscores, bool accumulate = false);

// Per-row layer normalization with learned gain/bias (1 x cols each).
// mean/rstd (rows x 1) are saved for the backward pass.
void layernorm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& y, Matrix& mean, Matrix& rstd);
void layernorm_backward(const Matrix& x, const Matrix& gain, const Matrix& mean, const Matrix& rstd,
                        const Matrix& dy, Matrix& dx, Matrix& dgain, Matrix& dbias, bool accumulate_dx = false);

namespace serial {
void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void add_row_bias(Matrix& x, const Matrix& bias);
void relu(const Matrix& x, Matrix& y);
void relu_backward(const Matrix& x, const Matrix& dy, Matrix& dx, bool accumulate = false);
void softmax_rows(const Matrix& scores, Matrix& probs);
void softmax_rows_causal(const Matrix& scores, Matrix& probs);
void softmax_backward(const Matrix& probs, const Matrix& dprobs, Matrix& dscores, bool accumulate = false);
void layernorm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& y, Matrix& mean, Matrix& rstd);
void layernorm_backward(const Matrix& x, const Matrix& gain, const Matrix& mean, const Matrix& rstd,
                        const Matrix& dy, Matrix& dx, Matrix& dgain, Matrix& dbias, bool accumulate_dx = false);
}  // namespace serial

}  // namespace kern
}  // namespace depmt

#endif
