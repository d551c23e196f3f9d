#include "archsearch/kernels.hpp"

#include <atomic>
#include <cmath>

namespace archsearch::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool openmp_available() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

// ---------------------------------------------------------------------------

void matmul_bias_serial(int batch, int in_dim, int out_dim, const double* X,
                        const double* W, const double* B, double* Y) {
    for (int n = 0; n < batch; ++n) {
        for (int j = 0; j < out_dim; ++j) {
            double acc = B[j];
            for (int i = 0; i < in_dim; ++i) {
                acc += X[n * in_dim + i] * W[i * out_dim + j];
            }
            Y[n * out_dim + j] = acc;
        }
    }
}

void matmul_bias_parallel(int batch, int in_dim, int out_dim, const double* X,
                          const double* W, const double* B, double* Y) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < batch; ++n) {
        for (int j = 0; j < out_dim; ++j) {
            double acc = B[j];
            for (int i = 0; i < in_dim; ++i) {
                acc += X[n * in_dim + i] * W[i * out_dim + j];
            }
            Y[n * out_dim + j] = acc;
        }
    }
}

void matmul_bias(int batch, int in_dim, int out_dim, const double* X,
                 const double* W, const double* B, double* Y) {
    if (parallel_enabled())
        matmul_bias_parallel(batch, in_dim, out_dim, X, W, B, Y);
    else
        matmul_bias_serial(batch, in_dim, out_dim, X, W, B, Y);
}

// ---------------------------------------------------------------------------

void relu_serial(std::size_t n, double* y) {
    for (std::size_t i = 0; i < n; ++i) {
        if (y[i] < 0.0) y[i] = 0.0;
    }
}

void relu_parallel(std::size_t n, double* y) {
    const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < nn; ++i) {
        if (y[i] < 0.0) y[i] = 0.0;
    }
}

void relu(std::size_t n, double* y) {
    if (parallel_enabled())
        relu_parallel(n, y);
    else
        relu_serial(n, y);
}

void sigmoid_serial(std::size_t n, double* y) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = 1.0 / (1.0 + std::exp(-y[i]));
    }
}

void sigmoid_parallel(std::size_t n, double* y) {
    const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < nn; ++i) {
        y[i] = 1.0 / (1.0 + std::exp(-y[i]));
    }
}

void sigmoid(std::size_t n, double* y) {
    if (parallel_enabled())
        sigmoid_parallel(n, y);
    else
        sigmoid_serial(n, y);
}

namespace {
inline void softmax_row(int dim, double* row) {
    double mx = row[0];
    for (int j = 1; j < dim; ++j) {
        if (row[j] > mx) mx = row[j];
    }
    double sum = 0.0;
    for (int j = 0; j < dim; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
    }
    for (int j = 0; j < dim; ++j) row[j] /= sum;
}
}  // namespace

void softmax_rows_serial(int batch, int dim, double* y) {
    for (int n = 0; n < batch; ++n) softmax_row(dim, y + n * dim);
}

void softmax_rows_parallel(int batch, int dim, double* y) {
#pragma omp parallel for schedule(static)
    for (int n = 0; n < batch; ++n) softmax_row(dim, y + n * dim);
}

void softmax_rows(int batch, int dim, double* y) {
    if (parallel_enabled())
        softmax_rows_parallel(batch, dim, y);
    else
        softmax_rows_serial(batch, dim, y);
}

void relu_backward_serial(std::size_t n, const double* z, double* dy) {
    for (std::size_t i = 0; i < n; ++i) {
        if (z[i] <= 0.0) dy[i] = 0.0;
    }
}

void relu_backward_parallel(std::size_t n, const double* z, double* dy) {
    const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < nn; ++i) {
        if (z[i] <= 0.0) dy[i] = 0.0;
    }
}

void relu_backward(std::size_t n, const double* z, double* dy) {
    if (parallel_enabled())
        relu_backward_parallel(n, z, dy);
    else
        relu_backward_serial(n, z, dy);
}

// ---------------------------------------------------------------------------

void grad_weights_serial(int batch, int in_dim, int out_dim, const double* X,
                         const double* dY, double* dW) {
    for (int i = 0; i < in_dim; ++i) {
        for (int j = 0; j < out_dim; ++j) {
            double acc = 0.0;
            for (int n = 0; n < batch; ++n) {
                acc += X[n * in_dim + i] * dY[n * out_dim + j];
            }
            dW[i * out_dim + j] = acc;
        }
    }
}

void grad_weights_parallel(int batch, int in_dim, int out_dim, const double* X,
                           const double* dY, double* dW) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < in_dim; ++i) {
        for (int j = 0; j < out_dim; ++j) {
            double acc = 0.0;
            for (int n = 0; n < batch; ++n) {
                acc += X[n * in_dim + i] * dY[n * out_dim + j];
            }
            dW[i * out_dim + j] = acc;
        }
    }
}

void grad_weights(int batch, int in_dim, int out_dim, const double* X,
                  const double* dY, double* dW) {
    if (parallel_enabled())
        grad_weights_parallel(batch, in_dim, out_dim, X, dY, dW);
    else
        grad_weights_serial(batch, in_dim, out_dim, X, dY, dW);
}

void grad_bias_serial(int batch, int out_dim, const double* dY, double* dB) {
    for (int j = 0; j < out_dim; ++j) {
        double acc = 0.0;
        for (int n = 0; n < batch; ++n) acc += dY[n * out_dim + j];
        dB[j] = acc;
    }
}

void grad_bias_parallel(int batch, int out_dim, const double* dY, double* dB) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < out_dim; ++j) {
        double acc = 0.0;
        for (int n = 0; n < batch; ++n) acc += dY[n * out_dim + j];
        dB[j] = acc;
    }
}

void grad_bias(int batch, int out_dim, const double* dY, double* dB) {
    if (parallel_enabled())
        grad_bias_parallel(batch, out_dim, dY, dB);
    else
        grad_bias_serial(batch, out_dim, dY, dB);
}

void grad_input_serial(int batch, int in_dim, int out_dim, const double* dY,
                       const double* W, double* dX) {
    for (int n = 0; n < batch; ++n) {
        for (int i = 0; i < in_dim; ++i) {
            double acc = 0.0;
            for (int j = 0; j < out_dim; ++j) {
                acc += dY[n * out_dim + j] * W[i * out_dim + j];
            }
            dX[n * in_dim + i] = acc;
        }
    }
}

void grad_input_parallel(int batch, int in_dim, int out_dim, const double* dY,
                         const double* W, double* dX) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < batch; ++n) {
        for (int i = 0; i < in_dim; ++i) {
            double acc = 0.0;
            for (int j = 0; j < out_dim; ++j) {
                acc += dY[n * out_dim + j] * W[i * out_dim + j];
            }
            dX[n * in_dim + i] = acc;
        }
    }
}

void grad_input(int batch, int in_dim, int out_dim, const double* dY,
                const double* W, double* dX) {
    if (parallel_enabled())
        grad_input_parallel(batch, in_dim, out_dim, dY, W, dX);
    else
        grad_input_serial(batch, in_dim, out_dim, dY, W, dX);
}

// ---------------------------------------------------------------------------

namespace {
inline void adam_one(double* w, const double* g, double* m, double* v,
                     std::size_t i, double lr, double beta1, double beta2,
                     double eps, double bc1, double bc2) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
}
}  // namespace

void adam_step_serial(std::size_t n, double* w, const double* g, double* m,
                      double* v, long t, double lr, double beta1, double beta2,
                      double eps) {
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < n; ++i) {
        adam_one(w, g, m, v, i, lr, beta1, beta2, eps, bc1, bc2);
    }
}

void adam_step_parallel(std::size_t n, double* w, const double* g, double* m,
                        double* v, long t, double lr, double beta1,
                        double beta2, double eps) {
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < nn; ++i) {
        adam_one(w, g, m, v, static_cast<std::size_t>(i), lr, beta1, beta2,
                 eps, bc1, bc2);
    }
}

void adam_step(std::size_t n, double* w, const double* g, double* m, double* v,
               long t, double lr, double beta1, double beta2, double eps) {
    if (parallel_enabled())
        adam_step_parallel(n, w, g, m, v, t, lr, beta1, beta2, eps);
    else
        adam_step_serial(n, w, g, m, v, t, lr, beta1, beta2, eps);
}

}  // namespace archsearch::kernels
