#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sslbench/nn.hpp"
#include "sslbench/rng.hpp"

namespace sslbench {

struct MaskingPlan;

struct Features {
  std::vector<Tensor> pyramid;  // conv: stage maps, finest first
  std::vector<Tensor> taps;     // vit: token grids [B, D, g, g] from evenly spaced blocks
  Tensor pooled;                // [B, feature_dim]: pooled map or class token
};

class Encoder : public nn::Module {
 public:
  virtual Features forward(const Tensor& x) = 0;
  virtual int feature_dim() const = 0;
  virtual std::string arch() const = 0;
  virtual nlohmann::json describe() const = 0;
};

struct ConvEncoderConfig {
  int stem = 16;
  std::vector<int> widths{16, 32, 64, 128};
  int blocks = 2;
};

class BasicBlock : public nn::Module {
 public:
  BasicBlock(int in, int out, int stride, Rng& rng);
  Tensor forward(const Tensor& x);
  nn::BatchNorm& last_norm() { return bn2_; }

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm bn1_;
  nn::Conv2d conv2_;
  nn::BatchNorm bn2_;
  std::unique_ptr<nn::Conv2d> down_;
  std::unique_ptr<nn::BatchNorm> down_bn_;
};

class ConvEncoder : public Encoder {
 public:
  ConvEncoder(const ConvEncoderConfig& cfg, Rng& rng);
  Features forward(const Tensor& x) override;
  int feature_dim() const override { return cfg_.widths.back(); }
  std::string arch() const override { return "conv"; }
  nlohmann::json describe() const override;
  const ConvEncoderConfig& config() const { return cfg_; }
  BasicBlock& last_block() { return *stages_.back().back(); }

 private:
  ConvEncoderConfig cfg_;
  nn::Conv2d stem_;
  nn::BatchNorm stem_bn_;
  std::vector<std::vector<std::unique_ptr<BasicBlock>>> stages_;
};

struct ViTConfig {
  int image = 64;
  int patch = 8;
  int embed = 64;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int window = 0;  // token-grid window side for non-global blocks; 0 = all global
  bool frozen_patch_embed = false;
};

// Additive attention mask over [cls, patch tokens] for non-overlapping
// square windows: patch queries see the class token and their own window,
// the class query sees everything.
Tensor window_mask(int grid, int window);
// Per-block window side (0 = global). Blocks whose 1-based index is a
// multiple of depth/4 stay global.
std::vector<int> window_layout(int depth, int window);

class Attention : public nn::Module {
 public:
  Attention(int dim, int heads, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& mask) const;

 private:
  int heads_;
  nn::Linear qkv_;
  nn::Linear proj_;
};

class TransformerBlock : public nn::Module {
 public:
  TransformerBlock(int dim, int heads, int mlp_ratio, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& mask) const;

 private:
  nn::LayerNorm norm1_;
  Attention attn_;
  nn::LayerNorm norm2_;
  nn::Linear fc1_;
  nn::Linear fc2_;
};

// Adds the learnt class token to a [B, N, D] sequence -> [B, 1 + N, D].
Tensor prepend_token(const Tensor& tokens, const Tensor& token);

class ViTEncoder : public Encoder {
 public:
  ViTEncoder(const ViTConfig& cfg, Rng& rng);
  Features forward(const Tensor& x) override;
  int feature_dim() const override { return cfg_.embed; }
  std::string arch() const override { return "vit"; }
  nlohmann::json describe() const override;
  const ViTConfig& config() const { return cfg_; }
  int grid() const { return cfg_.image / cfg_.patch; }

  void set_patch_embed_frozen(bool frozen);
  bool patch_embed_frozen() const { return cfg_.frozen_patch_embed; }
  std::vector<nn::NamedTensor> patch_embed_parameters() const { return patch_embed_.parameters(); }

  // Embeds patches, keeps each sample's unmasked tokens in plan order and
  // runs the blocks with global attention -> [B, 1 + kept, D].
  Tensor forward_masked(const Tensor& x, const std::vector<MaskingPlan>& plans);

  // Per-block masks (undefined tensor = global attention).
  const std::vector<Tensor>& block_masks() const { return masks_; }
  void set_block_windows(const std::vector<int>& windows);

  // Resizes the position embedding to a new grid (checkpoints made at
  // another resolution).
  void load_pos_embed(const Tensor& pos);

  Tensor pos_embed;  // [1 + N, D]
  Tensor cls_token;  // [D]

 private:
  Tensor embed(const Tensor& x);
  ViTConfig cfg_;
  nn::Linear patch_embed_;
  std::vector<std::unique_ptr<TransformerBlock>> blocks_;
  nn::LayerNorm norm_;
  std::vector<Tensor> masks_;
};

// Bilinear resize of the grid part of a [1 + g*g, D] embedding; the class
// row passes through untouched.
Tensor interpolate_pos_embed(const Tensor& pos, int new_grid);

// Shadow parameter set updated as an exponential moving average of an online
// module with the same layout.
class EmaShadow {
 public:
  EmaShadow(const nn::Module& online, nn::Module& shadow, double momentum);
  void update();
  double momentum() const { return momentum_; }

 private:
  const nn::Module& online_;
  nn::Module& shadow_;
  double momentum_;
};

struct EncoderConfig {
  std::string arch = "conv";
  ConvEncoderConfig conv;
  ViTConfig vit;
};
std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg, Rng& rng);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

}  // namespace sslbench
