#pragma once

// Dense double-precision inner loops used by the tensor ops and the
// optimizer. Every kernel has a portable scalar reference and, where the
// host supports it, an AVX2/FMA variant. The variant is chosen once at
// startup (override with SSLBENCH_KERNELS=scalar|avx2) and can be switched
// at runtime for equivalence testing.

#include <cstddef>
#include <string_view>

namespace sslbench::kernels {

enum class Isa { scalar, avx2 };

struct AdamWParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double bias_correction1 = 1.0;  // 1 - beta1^t
  double bias_correction2 = 1.0;  // 1 - beta2^t
};

struct KernelTable {
  // C[m x n] (+)= A[m x k] * B[k x n], all row-major and contiguous.
  void (*gemm)(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
  double (*dot)(std::size_t n, const double* a, const double* b);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  void (*adamw)(std::size_t n, double* param, const double* grad, double* m, double* v,
                const AdamWParams& p);
};

namespace scalar {
const KernelTable& table();
}
namespace avx2 {
const KernelTable& table();
}

bool supported(Isa isa);
const KernelTable& table(Isa isa);
const KernelTable& active();
Isa active_isa();
void select(Isa isa);
std::string_view isa_name(Isa isa);

// op(A)[m x k] * op(B)[k x n] with optional transposition of the stored
// operands; A is stored k x m when trans_a, B is stored n x k when trans_b.
void matmul(bool trans_a, bool trans_b, int m, int n, int k, const double* a, const double* b,
            double* c, bool accumulate);

}  // namespace sslbench::kernels
