#include "sslbench/optim.hpp"

#include <cmath>

#include "sslbench/errors.hpp"

namespace sslbench {

AdamW::AdamW(std::vector<nn::NamedTensor> params, Options options) : options_(options) {
  for (auto& p : params) {
    const std::size_t n = static_cast<std::size_t>(p.tensor.numel());
    slots_.push_back({p.tensor, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
}

void AdamW::step() {
  ++step_;
  kernels::AdamWParams p;
  p.lr = options_.lr;
  p.beta1 = options_.beta1;
  p.beta2 = options_.beta2;
  p.eps = options_.eps;
  p.weight_decay = options_.weight_decay;
  p.bias_correction1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  p.bias_correction2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  const auto& k = kernels::active();
  for (auto& s : slots_) {
    if (!s.param.requires_grad() || !s.param.has_grad()) continue;
    k.adamw(s.m.size(), s.param.data(), s.param.grad().data(), s.m.data(), s.v.data(), p);
  }
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

void ema_update(const std::vector<nn::NamedTensor>& online, const std::vector<nn::NamedTensor>& shadow,
                double momentum) {
  require(momentum >= 0.0 && momentum <= 1.0, "EMA momentum must lie in [0, 1]");
  require(online.size() == shadow.size(), "EMA: parameter count mismatch");
  for (std::size_t i = 0; i < online.size(); ++i) {
    require(online[i].tensor.shape() == shadow[i].tensor.shape(),
            "EMA: shape mismatch for " + online[i].name + ": " + shape_str(online[i].tensor.shape()) + " vs " +
                shape_str(shadow[i].tensor.shape()));
  }
  for (std::size_t i = 0; i < online.size(); ++i) {
    Tensor phi = shadow[i].tensor;
    const double* theta = online[i].tensor.data();
    double* dst = phi.data();
    for (std::int64_t j = 0; j < phi.numel(); ++j) dst[j] = momentum * dst[j] + (1.0 - momentum) * theta[j];
  }
}

}  // namespace sslbench
