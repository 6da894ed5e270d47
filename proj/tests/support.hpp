#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>
#include <vector>

#include "oracles.hpp"
#include "sslbench/rng.hpp"
#include "sslbench/tensor.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sslbench_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> random_values(std::size_t n, sslbench::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline sslbench::Tensor random_tensor(sslbench::Shape shape, sslbench::Rng& rng, double lo = -1.0, double hi = 1.0) {
  const auto n = static_cast<std::size_t>(sslbench::numel(shape));
  return sslbench::Tensor::from(std::move(shape), random_values(n, rng, lo, hi));
}

// Relative error between the autograd gradient of f at x and central
// differences. f must map a leaf tensor to a scalar tensor.
inline double gradient_error(const std::function<sslbench::Tensor(const sslbench::Tensor&)>& f,
                             const sslbench::Tensor& x0, double h = 1e-6) {
  sslbench::Tensor x = x0.clone();
  x.set_requires_grad(true);
  sslbench::Tensor y = f(x);
  y.backward();
  const std::vector<double> analytic = x.grad();
  auto value = [&](const std::vector<double>& v) {
    sslbench::NoGradGuard guard;
    return f(sslbench::Tensor::from(x0.shape(), v)).item();
  };
  const std::vector<double> start(x0.values().begin(), x0.values().end());
  return oracle::relative_error(analytic, oracle::numeric_gradient(value, start, h));
}

}  // namespace testing
