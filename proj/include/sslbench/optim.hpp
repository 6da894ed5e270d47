#pragma once

#include <vector>

#include "sslbench/kernels.hpp"
#include "sslbench/nn.hpp"

namespace sslbench {

// Adam with decoupled weight decay. Parameters that are frozen
// (requires_grad off) or received no gradient in a step are left untouched.
class AdamW {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  AdamW(std::vector<nn::NamedTensor> params, Options options);

  void step();
  void zero_grad();
  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }
  long steps() const { return step_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots_;
  Options options_;
  long step_ = 0;
};

// phi <- momentum * phi + (1 - momentum) * theta, elementwise over matching
// parameter lists. The shadow never receives gradients.
void ema_update(const std::vector<nn::NamedTensor>& online, const std::vector<nn::NamedTensor>& shadow,
                double momentum);

}  // namespace sslbench
