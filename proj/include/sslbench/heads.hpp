#pragma once

#include <memory>
#include <span>
#include <vector>

#include "sslbench/data.hpp"
#include "sslbench/encoders.hpp"
#include "sslbench/nn.hpp"

namespace sslbench {

class Classifier : public nn::Module {
 public:
  Classifier(int in, int classes, Rng& rng);
  Tensor forward(const Tensor& features) const;
  void zero_init();
  int classes() const { return fc_.weight.dim(1); }

 private:
  nn::Linear fc_;
};

// 1x1 reduce -> 3x3 -> 1x1 expand with an identity shortcut.
class Bottleneck : public nn::Module {
 public:
  Bottleneck(int channels, Rng& rng);
  Tensor forward(const Tensor& x);

 private:
  nn::Conv2d c1_;
  nn::BatchNorm b1_;
  nn::Conv2d c2_;
  nn::BatchNorm b2_;
  nn::Conv2d c3_;
  nn::BatchNorm b3_;
};

// One fusion level: halve channels (1x1 conv + norm), upsample 2x, concat
// the next-finer encoder map, refine with bottleneck blocks.
class FusionLevel : public nn::Module {
 public:
  FusionLevel(int in, int skip, int blocks, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& skip);
  // Output of the halving step alone (before concatenation).
  Tensor reduce(const Tensor& x);
  int out_channels() const { return out_; }

 private:
  nn::Conv2d reduce_;
  nn::BatchNorm norm_;
  std::vector<std::unique_ptr<Bottleneck>> blocks_;
  int out_;
};

// Three fusion levels over a four-level pyramid (finest first) and a
// prediction head that maps to one sigmoid channel at the input size.
class FusionDecoder : public nn::Module {
 public:
  FusionDecoder(const std::vector<int>& pyramid_channels, int blocks_per_level, Rng& rng);
  Tensor forward(const std::vector<Tensor>& pyramid, int out_h, int out_w);
  void zero_init_output();
  FusionLevel& level(int i) { return *levels_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<std::unique_ptr<FusionLevel>> levels_;
  nn::Conv2d head1_;
  nn::Conv2d head2_;
  nn::Conv2d head3_;
};

// Reshaped token grids from four block taps -> projected four-level pyramid
// at sides S/2, S/4, S/8, S/16.
class TokenPyramid : public nn::Module {
 public:
  TokenPyramid(int embed, const std::vector<int>& widths, Rng& rng);
  std::vector<Tensor> forward(const std::vector<Tensor>& taps, int image_side);

 private:
  std::vector<std::unique_ptr<nn::Conv2d>> proj_;
};

struct HeadConfig {
  int seg_blocks = 1;
  int depth_blocks = 1;
  std::vector<int> dense_widths{16, 32, 64, 128};  // ViT adapter widths
};

// Encoder plus the task head. forward() gives logits [B, C] or a
// probability / depth map [B, 1, H, W].
class TaskModel : public nn::Module {
 public:
  TaskModel(std::unique_ptr<Encoder> encoder, TaskKind task, int classes, const HeadConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& x);
  Encoder& encoder() { return *encoder_; }
  TaskKind task() const { return task_; }
  Classifier* classifier() { return classifier_.get(); }
  FusionDecoder* decoder() { return decoder_.get(); }

 private:
  std::unique_ptr<Encoder> encoder_;
  TaskKind task_;
  std::unique_ptr<Classifier> classifier_;
  std::unique_ptr<TokenPyramid> adapter_;
  std::unique_ptr<FusionDecoder> decoder_;
};

// ---- losses --------------------------------------------------------------

// sum_b w_{y_b} * -log softmax(z_b)_{y_b} / sum_b w_{y_b}
Tensor weighted_cross_entropy(const Tensor& logits, const std::vector<int>& labels, const std::vector<double>& weights);
// Per-image soft Dice loss 1 - (2 sum pt + eps) / (sum p + sum t + eps),
// averaged over the batch (leading axis).
Tensor dice_loss(const Tensor& pred, const Tensor& target, double eps = 1.0);

struct AlignmentSolution {
  double s = 0.0;
  double t = 0.0;
  bool degenerate = false;
};
// Least-squares (s, t) minimizing sum over lens pixels of (s*pred + t - y)^2.
AlignmentSolution ssi_align(std::span<const double> pred, std::span<const double> target,
                            std::span<const double> lens);

struct SsiOptions {
  double grad_weight = 0.5;
  int scales = 4;
};
// Batch mean of the aligned MSE over lens pixels plus the weighted
// multi-scale gradient-matching term. pred/target/lens are [B, 1, H, W];
// gradients flow into pred through the alignment. `degenerate` (optional)
// receives the number of images that needed the fallback alignment.
Tensor ssi_mse_loss(const Tensor& pred, const Tensor& target, const Tensor& lens, const SsiOptions& opt,
                    int* degenerate = nullptr);
// Aligned MSE of one image (the validation metric's per-image term).
double ssi_mse_value(std::span<const double> pred, std::span<const double> target, std::span<const double> lens);

}  // namespace sslbench
