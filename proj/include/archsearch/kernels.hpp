#pragma once

#include <cstddef>

namespace archsearch::kernels {

// Dense-layer primitives behind the surrogate. Each kernel exists twice:
// a serial reference implementation and an OpenMP variant that parallelizes
// only over independent output elements while keeping the inner summation
// order fixed, so the two are bit-identical and the tests can assert exact
// equality. The unsuffixed entry points dispatch on set_parallel().
//
// Layouts, all row-major:
//   X: batch x in_dim      W: in_dim x out_dim     Y, dY: batch x out_dim
//   B, dB: out_dim         dW: in_dim x out_dim    dX: batch x in_dim

bool openmp_available();
void set_parallel(bool enabled);
bool parallel_enabled();

// Y[n,j] = B[j] + sum_i X[n,i] * W[i,j]
void matmul_bias_serial(int batch, int in_dim, int out_dim, const double* X,
                        const double* W, const double* B, double* Y);
void matmul_bias_parallel(int batch, int in_dim, int out_dim, const double* X,
                          const double* W, const double* B, double* Y);
void matmul_bias(int batch, int in_dim, int out_dim, const double* X,
                 const double* W, const double* B, double* Y);

// Elementwise activations, in place.
void relu_serial(std::size_t n, double* y);
void relu_parallel(std::size_t n, double* y);
void relu(std::size_t n, double* y);

void sigmoid_serial(std::size_t n, double* y);
void sigmoid_parallel(std::size_t n, double* y);
void sigmoid(std::size_t n, double* y);

// Row-wise softmax with max subtraction for stability.
void softmax_rows_serial(int batch, int dim, double* y);
void softmax_rows_parallel(int batch, int dim, double* y);
void softmax_rows(int batch, int dim, double* y);

// dY[n,j] *= (Z[n,j] > 0) where Z is the pre-activation input of the relu.
void relu_backward_serial(std::size_t n, const double* z, double* dy);
void relu_backward_parallel(std::size_t n, const double* z, double* dy);
void relu_backward(std::size_t n, const double* z, double* dy);

// dW[i,j] = sum_n X[n,i] * dY[n,j]
void grad_weights_serial(int batch, int in_dim, int out_dim, const double* X,
                         const double* dY, double* dW);
void grad_weights_parallel(int batch, int in_dim, int out_dim, const double* X,
                           const double* dY, double* dW);
void grad_weights(int batch, int in_dim, int out_dim, const double* X,
                  const double* dY, double* dW);

// dB[j] = sum_n dY[n,j]
void grad_bias_serial(int batch, int out_dim, const double* dY, double* dB);
void grad_bias_parallel(int batch, int out_dim, const double* dY, double* dB);
void grad_bias(int batch, int out_dim, const double* dY, double* dB);

// dX[n,i] = sum_j dY[n,j] * W[i,j]
void grad_input_serial(int batch, int in_dim, int out_dim, const double* dY,
                       const double* W, double* dX);
void grad_input_parallel(int batch, int in_dim, int out_dim, const double* dY,
                         const double* W, double* dX);
void grad_input(int batch, int in_dim, int out_dim, const double* dY,
                const double* W, double* dX);

// Adam step over a flat parameter array; m/v are the moment buffers and t the
// 1-based step index. Elementwise, so the parallel variant is trivially
// bit-identical.
void adam_step_serial(std::size_t n, double* w, const double* g, double* m,
                      double* v, long t, double lr, double beta1, double beta2,
                      double eps);
void adam_step_parallel(std::size_t n, double* w, const double* g, double* m,
                        double* v, long t, double lr, double beta1,
                        double beta2, double eps);
void adam_step(std::size_t n, double* w, const double* g, double* m, double* v,
               long t, double lr, double beta1, double beta2, double eps);

}  // namespace archsearch::kernels
