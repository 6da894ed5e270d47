#pragma once

// Differentiable tensor ops. Layouts: images and feature maps are NCHW,
// token sequences are [batch, tokens, dim], linear weights are [in, out].

#include <vector>

#include "sslbench/tensor.hpp"

namespace sslbench::ops {

// Elementwise; `b` may have the same shape as `a` or a suffix of it
// (broadcast over the leading axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);

// x[..., k] * w[k, n] (+ bias[n])
Tensor matmul(const Tensor& x, const Tensor& w);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
// Batched op(a)[b, m, k] * op(b)[b, k, n].
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int length);
// out[b, i, :] = x[b, index[b * m + i], :] for x of shape [B, N, D].
Tensor gather_tokens(const Tensor& x, const std::vector<int>& index, int m);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
// Mean over the spatial axes of an NCHW map -> [N, C].
Tensor mean_hw(const Tensor& x);

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding);
// Bilinear resize of an NCHW map with half-pixel centers (align_corners off).
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};
// Channel axis 1; statistics over every other axis. `gamma`/`beta` may be
// undefined for a non-affine normalization.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

// [B, C, H, W] -> [B, (H/p)*(W/p), C*p*p]
Tensor patchify(const Tensor& x, int patch);

}  // namespace sslbench::ops
