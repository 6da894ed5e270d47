#include "sslbench/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace sslbench::kernels {
namespace avx2 {
bool compiled();
}

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  const bool avx2_ok = supported(Isa::avx2);
  if (const char* env = std::getenv("SSLBENCH_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_ok) return Isa::avx2;
  }
  return avx2_ok ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return avx2::compiled() && cpu_has_avx2();
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa)) {
    throw std::runtime_error("kernel variant '" + std::string(isa_name(isa)) +
                             "' is not supported on this host");
  }
  return isa == Isa::avx2 ? avx2::table() : scalar::table();
}

const KernelTable& active() {
  return current().load(std::memory_order_relaxed) == Isa::avx2 ? avx2::table() : scalar::table();
}

Isa active_isa() { return current().load(); }

void select(Isa isa) {
  table(isa);  // validates
  current().store(isa);
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void matmul(bool trans_a, bool trans_b, int m, int n, int k, const double* a, const double* b,
            double* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  thread_local std::vector<double> a_buf;
  thread_local std::vector<double> b_buf;
  if (trans_a) {
    a_buf.resize(static_cast<std::size_t>(m) * k);
    for (int p = 0; p < k; ++p)
      for (int i = 0; i < m; ++i)
        a_buf[static_cast<std::size_t>(i) * k + p] = a[static_cast<std::size_t>(p) * m + i];
    a = a_buf.data();
  }
  if (trans_b) {
    b_buf.resize(static_cast<std::size_t>(k) * n);
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p)
        b_buf[static_cast<std::size_t>(p) * n + j] = b[static_cast<std::size_t>(j) * k + p];
    b = b_buf.data();
  }
  active().gemm(m, n, k, a, b, c, accumulate);
}

}  // namespace sslbench::kernels
