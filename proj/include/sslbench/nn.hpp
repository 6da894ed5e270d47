#pragma once

#include <string>
#include <vector>

#include "sslbench/ops.hpp"
#include "sslbench/rng.hpp"
#include "sslbench/tensor.hpp"

namespace sslbench::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Owns named parameters and buffers and a tree of child modules. Children
// are registered by address, so modules are neither copyable nor movable.
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  // Parameters (learnable), in registration order, with dotted names.
  std::vector<NamedTensor> parameters() const;
  // Parameters followed by buffers: everything a checkpoint stores.
  std::vector<NamedTensor> state() const;

  void train(bool on = true);
  void eval() { train(false); }
  bool training() const { return training_; }

  void set_requires_grad(bool on);
  void zero_grad();
  // Copies values (not graph) from another module with identical state layout.
  void copy_state_from(const Module& other);

 protected:
  Tensor register_parameter(std::string name, Tensor t);
  Tensor register_buffer(std::string name, Tensor t);
  void register_module(std::string name, Module& child);

 private:
  void collect(const std::string& prefix, bool buffers, std::vector<NamedTensor>& out) const;

  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  bool training_ = true;
};

class Linear : public Module {
 public:
  Linear(int in, int out, Rng& rng, bool bias = true);
  Tensor forward(const Tensor& x) const { return ops::linear(x, weight, bias); }
  Tensor weight;  // [in, out]
  Tensor bias;
};

class Conv2d : public Module {
 public:
  Conv2d(int in, int out, int kernel, int stride, int padding, Rng& rng, bool bias = false);
  Tensor forward(const Tensor& x) const { return ops::conv2d(x, weight, bias, stride_, padding_); }
  Tensor weight;  // [out, in, k, k]
  Tensor bias;

 private:
  int stride_;
  int padding_;
};

class BatchNorm : public Module {
 public:
  explicit BatchNorm(int channels, bool affine = true);
  Tensor forward(const Tensor& x);
  Tensor gamma;
  Tensor beta;

 private:
  ops::BatchNormState state_;
};

class LayerNorm : public Module {
 public:
  explicit LayerNorm(int dim);
  Tensor forward(const Tensor& x) const { return ops::layer_norm(x, gamma, beta); }
  Tensor gamma;
  Tensor beta;
};

// Linear -> BatchNorm -> ReLU -> Linear, the projector/predictor pattern of
// the contrastive and redundancy-reduction objectives.
class Mlp : public Module {
 public:
  Mlp(int in, int hidden, int out, Rng& rng);
  Tensor forward(const Tensor& x);

 private:
  Linear fc1_;
  BatchNorm bn_;
  Linear fc2_;
};

}  // namespace sslbench::nn
