#include "sslbench/kernels.hpp"

#include <cmath>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define SSLBENCH_HAVE_AVX2 1
#else
#define SSLBENCH_HAVE_AVX2 0
#endif

namespace sslbench::kernels::avx2 {

#if SSLBENCH_HAVE_AVX2
namespace {

// Register block of up to 4 rows x 8 columns of C, summed over all of k.
template <int Rows>
inline void block_4x8(int k, int n, const double* a, int lda, const double* b, double* c,
                      bool accumulate) {
  __m256d acc[Rows][2];
  for (int r = 0; r < Rows; ++r) acc[r][0] = acc[r][1] = _mm256_setzero_pd();
  for (int p = 0; p < k; ++p) {
    const double* brow = b + static_cast<std::size_t>(p) * n;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    for (int r = 0; r < Rows; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + static_cast<std::size_t>(r) * lda + p);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < Rows; ++r) {
    double* crow = c + static_cast<std::size_t>(r) * n;
    if (accumulate) {
      acc[r][0] = _mm256_add_pd(acc[r][0], _mm256_loadu_pd(crow));
      acc[r][1] = _mm256_add_pd(acc[r][1], _mm256_loadu_pd(crow + 4));
    }
    _mm256_storeu_pd(crow, acc[r][0]);
    _mm256_storeu_pd(crow + 4, acc[r][1]);
  }
}

template <int Rows>
inline void block_4x4(int k, int n, const double* a, int lda, const double* b, double* c,
                      bool accumulate) {
  __m256d acc[Rows];
  for (int r = 0; r < Rows; ++r) acc[r] = _mm256_setzero_pd();
  for (int p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + static_cast<std::size_t>(p) * n);
    for (int r = 0; r < Rows; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + static_cast<std::size_t>(r) * lda + p);
      acc[r] = _mm256_fmadd_pd(av, b0, acc[r]);
    }
  }
  for (int r = 0; r < Rows; ++r) {
    double* crow = c + static_cast<std::size_t>(r) * n;
    if (accumulate) acc[r] = _mm256_add_pd(acc[r], _mm256_loadu_pd(crow));
    _mm256_storeu_pd(crow, acc[r]);
  }
}

template <int Rows>
inline void block_tail(int k, int n, int j0, const double* a, int lda, const double* b, double* c,
                       bool accumulate) {
  for (int r = 0; r < Rows; ++r) {
    const double* arow = a + static_cast<std::size_t>(r) * lda;
    double* crow = c + static_cast<std::size_t>(r) * n;
    for (int j = j0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s = std::fma(arow[p], b[static_cast<std::size_t>(p) * n + j], s);
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

template <int Rows>
void row_panel(int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  int j = 0;
  for (; j + 8 <= n; j += 8) block_4x8<Rows>(k, n, a, k, b + j, c + j, accumulate);
  for (; j + 4 <= n; j += 4) block_4x4<Rows>(k, n, a, k, b + j, c + j, accumulate);
  if (j < n) block_tail<Rows>(k, n, j, a, k, b, c, accumulate);
}

void gemm(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    row_panel<4>(n, k, a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n,
                 accumulate);
  }
  for (; i < m; ++i) {
    row_panel<1>(n, k, a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n,
                 accumulate);
  }
}

double dot(std::size_t n, const double* a, const double* b) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(s0, s1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

// Kept free of FMA so that it is bit-identical to the scalar reference.
void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Same operation order as the scalar reference, no FMA: bit-identical.
void adamw(std::size_t n, double* param, const double* grad, double* m, double* v,
           const AdamWParams& p) {
  const double decay_s = 1.0 - p.lr * p.weight_decay;
  const __m256d decay = _mm256_set1_pd(decay_s);
  const __m256d b1 = _mm256_set1_pd(p.beta1);
  const __m256d b2 = _mm256_set1_pd(p.beta2);
  const __m256d b1c = _mm256_set1_pd(1.0 - p.beta1);
  const __m256d b2c = _mm256_set1_pd(1.0 - p.beta2);
  const __m256d bc1 = _mm256_set1_pd(p.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(p.bias_correction2);
  const __m256d lr = _mm256_set1_pd(p.lr);
  const __m256d eps = _mm256_set1_pd(p.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    __m256d w = _mm256_mul_pd(_mm256_loadu_pd(param + i), decay);
    __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(b1c, g));
    __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                               _mm256_mul_pd(b2c, _mm256_mul_pd(g, g)));
    const __m256d mhat = _mm256_div_pd(mv, bc1);
    const __m256d vhat = _mm256_div_pd(vv, bc2);
    const __m256d upd = _mm256_div_pd(mhat, _mm256_add_pd(_mm256_sqrt_pd(vhat), eps));
    w = _mm256_sub_pd(w, _mm256_mul_pd(lr, upd));
    _mm256_storeu_pd(param + i, w);
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    param[i] *= decay_s;
    m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g;
    v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * (g * g);
    const double mhat = m[i] / p.bias_correction1;
    const double vhat = v[i] / p.bias_correction2;
    param[i] -= p.lr * (mhat / (std::sqrt(vhat) + p.eps));
  }
}

}  // namespace

bool compiled() { return true; }

const KernelTable& table() {
  static const KernelTable t{&gemm, &dot, &axpy, &adamw};
  return t;
}

#else

bool compiled() { return false; }

const KernelTable& table() { return scalar::table(); }

#endif

}  // namespace sslbench::kernels::avx2
