#include "sslbench/nn.hpp"

#include <cmath>

#include "sslbench/errors.hpp"

namespace sslbench::nn {

std::vector<NamedTensor> Module::parameters() const {
  std::vector<NamedTensor> out;
  collect("", false, out);
  return out;
}

std::vector<NamedTensor> Module::state() const {
  std::vector<NamedTensor> out;
  collect("", false, out);
  collect("", true, out);
  return out;
}

void Module::collect(const std::string& prefix, bool buffers, std::vector<NamedTensor>& out) const {
  for (const auto& t : buffers ? buffers_ : params_) out.push_back({prefix + t.name, t.tensor});
  for (const auto& [name, child] : children_) child->collect(prefix + name + ".", buffers, out);
}

void Module::train(bool on) {
  training_ = on;
  for (auto& [name, child] : children_) child->train(on);
}

void Module::set_requires_grad(bool on) {
  for (auto& p : parameters()) p.tensor.set_requires_grad(on);
}

void Module::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

void Module::copy_state_from(const Module& other) {
  auto dst = state();
  auto src = other.state();
  require(dst.size() == src.size(), "copy_state_from: module layouts differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    require(dst[i].name == src[i].name && dst[i].tensor.shape() == src[i].tensor.shape(),
            "copy_state_from: mismatch at " + dst[i].name);
    std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(), dst[i].tensor.values().begin());
  }
}

Tensor Module::register_parameter(std::string name, Tensor t) {
  t.set_requires_grad(true);
  params_.push_back({std::move(name), t});
  return t;
}

Tensor Module::register_buffer(std::string name, Tensor t) {
  buffers_.push_back({std::move(name), t});
  return t;
}

void Module::register_module(std::string name, Module& child) { children_.emplace_back(std::move(name), &child); }

Linear::Linear(int in, int out, Rng& rng, bool with_bias) {
  // Xavier-uniform, the usual transformer/MLP initialization.
  const double bound = std::sqrt(6.0 / (in + out));
  std::vector<double> w(static_cast<std::size_t>(in) * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  weight = register_parameter("weight", Tensor::from({in, out}, std::move(w)));
  if (with_bias) bias = register_parameter("bias", Tensor::zeros({out}));
}

Conv2d::Conv2d(int in, int out, int kernel, int stride, int padding, Rng& rng, bool with_bias)
    : stride_(stride), padding_(padding) {
  // Kaiming-normal (fan_out, ReLU gain), as torchvision ResNets do.
  const double std = std::sqrt(2.0 / (out * kernel * kernel));
  std::vector<double> w(static_cast<std::size_t>(out) * in * kernel * kernel);
  for (double& v : w) v = rng.normal(0.0, std);
  weight = register_parameter("weight", Tensor::from({out, in, kernel, kernel}, std::move(w)));
  if (with_bias) bias = register_parameter("bias", Tensor::zeros({out}));
}

BatchNorm::BatchNorm(int channels, bool affine) {
  if (affine) {
    gamma = register_parameter("weight", Tensor::full({channels}, 1.0));
    beta = register_parameter("bias", Tensor::zeros({channels}));
  }
  state_.running_mean = register_buffer("running_mean", Tensor::zeros({channels}));
  state_.running_var = register_buffer("running_var", Tensor::full({channels}, 1.0));
}

Tensor BatchNorm::forward(const Tensor& x) { return ops::batch_norm(x, gamma, beta, state_, training()); }

LayerNorm::LayerNorm(int dim) {
  gamma = register_parameter("weight", Tensor::full({dim}, 1.0));
  beta = register_parameter("bias", Tensor::zeros({dim}));
}

Mlp::Mlp(int in, int hidden, int out, Rng& rng) : fc1_(in, hidden, rng, false), bn_(hidden), fc2_(hidden, out, rng) {
  register_module("fc1", fc1_);
  register_module("bn", bn_);
  register_module("fc2", fc2_);
}

Tensor Mlp::forward(const Tensor& x) { return fc2_.forward(ops::relu(bn_.forward(fc1_.forward(x)))); }

}  // namespace sslbench::nn
