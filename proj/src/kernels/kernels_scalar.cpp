#include "sslbench/kernels.hpp"

#include <cmath>
#include <vector>

namespace sslbench::kernels::scalar {
namespace {

void gemm(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  std::vector<double> acc(static_cast<std::size_t>(n));
  for (int i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (accumulate) {
      for (int j = 0; j < n; ++j) crow[j] += acc[j];
    } else {
      for (int j = 0; j < n; ++j) crow[j] = acc[j];
    }
  }
}

double dot(std::size_t n, const double* a, const double* b) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void adamw(std::size_t n, double* param, const double* grad, double* m, double* v,
           const AdamWParams& p) {
  const double decay = 1.0 - p.lr * p.weight_decay;
  const double b1c = 1.0 - p.beta1;
  const double b2c = 1.0 - p.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    param[i] *= decay;
    m[i] = p.beta1 * m[i] + b1c * g;
    v[i] = p.beta2 * v[i] + b2c * (g * g);
    const double mhat = m[i] / p.bias_correction1;
    const double vhat = v[i] / p.bias_correction2;
    param[i] -= p.lr * (mhat / (std::sqrt(vhat) + p.eps));
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{&gemm, &dot, &axpy, &adamw};
  return t;
}

}  // namespace sslbench::kernels::scalar
