#include "sslbench/encoders.hpp"

#include <cmath>
#include <limits>

#include "sslbench/errors.hpp"
#include "sslbench/optim.hpp"
#include "sslbench/ssl_losses.hpp"

namespace sslbench {

using nlohmann::json;

BasicBlock::BasicBlock(int in, int out, int stride, Rng& rng)
    : conv1_(in, out, 3, stride, 1, rng), bn1_(out), conv2_(out, out, 3, 1, 1, rng), bn2_(out) {
  register_module("conv1", conv1_);
  register_module("bn1", bn1_);
  register_module("conv2", conv2_);
  register_module("bn2", bn2_);
  if (stride != 1 || in != out) {
    down_ = std::make_unique<nn::Conv2d>(in, out, 1, stride, 0, rng);
    down_bn_ = std::make_unique<nn::BatchNorm>(out);
    register_module("down", *down_);
    register_module("down_bn", *down_bn_);
  }
}

Tensor BasicBlock::forward(const Tensor& x) {
  Tensor y = ops::relu(bn1_.forward(conv1_.forward(x)));
  y = bn2_.forward(conv2_.forward(y));
  Tensor skip = down_ ? down_bn_->forward(down_->forward(x)) : x;
  return ops::relu(ops::add(y, skip));
}

ConvEncoder::ConvEncoder(const ConvEncoderConfig& cfg, Rng& rng)
    : cfg_(cfg), stem_(3, cfg.stem, 3, 1, 1, rng), stem_bn_(cfg.stem) {
  require(!cfg.widths.empty() && cfg.blocks >= 1, "conv encoder needs at least one stage and one block");
  register_module("stem", stem_);
  register_module("stem_bn", stem_bn_);
  int in = cfg.stem;
  for (std::size_t s = 0; s < cfg.widths.size(); ++s) {
    std::vector<std::unique_ptr<BasicBlock>> stage;
    for (int b = 0; b < cfg.blocks; ++b) {
      stage.push_back(std::make_unique<BasicBlock>(in, cfg.widths[s], b == 0 ? 2 : 1, rng));
      register_module("stage" + std::to_string(s + 1) + "." + std::to_string(b), *stage.back());
      in = cfg.widths[s];
    }
    stages_.push_back(std::move(stage));
  }
}

Features ConvEncoder::forward(const Tensor& x) {
  require(x.ndim() == 4 && x.dim(1) == 3, "conv encoder expects [B, 3, H, W], got " + shape_str(x.shape()));
  const int div = 1 << cfg_.widths.size();
  require(x.dim(2) % div == 0 && x.dim(3) % div == 0,
          "conv encoder input side must be divisible by " + std::to_string(div) + ", got " + shape_str(x.shape()));
  Features f;
  Tensor h = ops::relu(stem_bn_.forward(stem_.forward(x)));
  for (auto& stage : stages_) {
    for (auto& block : stage) h = block->forward(h);
    f.pyramid.push_back(h);
  }
  f.pooled = ops::mean_hw(h);
  return f;
}

json ConvEncoder::describe() const {
  return {{"arch", "conv"}, {"stem", cfg_.stem}, {"widths", cfg_.widths}, {"blocks", cfg_.blocks}};
}

// ---------------------------------------------------------------------------

Tensor window_mask(int grid, int window) {
  require(window > 0 && grid % window == 0,
          "window size " + std::to_string(window) + " does not divide the token grid " + std::to_string(grid));
  const int n = grid * grid;
  const int t = n + 1;
  const double neg = -std::numeric_limits<double>::infinity();
  std::vector<double> m(static_cast<std::size_t>(t) * t, 0.0);
  auto win = [&](int token) { return ((token / grid) / window) * (grid / window) + (token % grid) / window; };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (win(i) != win(j)) m[static_cast<std::size_t>(i + 1) * t + static_cast<std::size_t>(j + 1)] = neg;
  return Tensor::from({t, t}, std::move(m));
}

std::vector<int> window_layout(int depth, int window) {
  std::vector<int> out(static_cast<std::size_t>(depth), 0);
  if (window <= 0) return out;
  const int every = std::max(1, depth / 4);
  for (int i = 0; i < depth; ++i)
    if ((i + 1) % every != 0) out[static_cast<std::size_t>(i)] = window;
  return out;
}

Attention::Attention(int dim, int heads, Rng& rng) : heads_(heads), qkv_(dim, 3 * dim, rng), proj_(dim, dim, rng) {
  require(heads > 0 && dim % heads == 0, "embedding dim must be divisible by the head count");
  register_module("qkv", qkv_);
  register_module("proj", proj_);
}

Tensor Attention::forward(const Tensor& x, const Tensor& mask) const {
  const int b = x.dim(0);
  const int t = x.dim(1);
  const int d = x.dim(2);
  const int dh = d / heads_;
  Tensor qkv = ops::reshape(qkv_.forward(x), {b, t, 3, heads_, dh});
  qkv = ops::reshape(ops::permute(qkv, {2, 0, 3, 1, 4}), {3, b * heads_, t, dh});
  Tensor q = ops::reshape(ops::slice(qkv, 0, 0, 1), {b * heads_, t, dh});
  Tensor k = ops::reshape(ops::slice(qkv, 0, 1, 1), {b * heads_, t, dh});
  Tensor v = ops::reshape(ops::slice(qkv, 0, 2, 1), {b * heads_, t, dh});
  Tensor scores = ops::scale(ops::bmm(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(dh)));
  if (mask.defined()) scores = ops::add(scores, mask);
  Tensor out = ops::bmm(ops::softmax_lastdim(scores), v, false, false);
  out = ops::reshape(ops::permute(ops::reshape(out, {b, heads_, t, dh}), {0, 2, 1, 3}), {b, t, d});
  return proj_.forward(out);
}

TransformerBlock::TransformerBlock(int dim, int heads, int mlp_ratio, Rng& rng)
    : norm1_(dim), attn_(dim, heads, rng), norm2_(dim), fc1_(dim, dim * mlp_ratio, rng), fc2_(dim * mlp_ratio, dim, rng) {
  register_module("norm1", norm1_);
  register_module("attn", attn_);
  register_module("norm2", norm2_);
  register_module("fc1", fc1_);
  register_module("fc2", fc2_);
}

Tensor TransformerBlock::forward(const Tensor& x, const Tensor& mask) const {
  Tensor h = ops::add(x, attn_.forward(norm1_.forward(x), mask));
  return ops::add(h, fc2_.forward(ops::gelu(fc1_.forward(norm2_.forward(h)))));
}

Tensor prepend_token(const Tensor& tokens, const Tensor& token) {
  const int b = tokens.dim(0);
  const int d = tokens.dim(2);
  Tensor rows = ops::add(Tensor::zeros({b, 1, d}), token);
  return ops::concat({rows, tokens}, 1);
}

ViTEncoder::ViTEncoder(const ViTConfig& cfg, Rng& rng)
    : cfg_(cfg), patch_embed_(3 * cfg.patch * cfg.patch, cfg.embed, rng), norm_(cfg.embed) {
  require(cfg.patch > 0 && cfg.image % cfg.patch == 0,
          "image side " + std::to_string(cfg.image) + " must be divisible by the patch size " + std::to_string(cfg.patch));
  require(cfg.depth >= 1, "ViT depth must be at least 1");
  const int n = grid() * grid();
  register_module("patch_embed", patch_embed_);
  std::vector<double> pos(static_cast<std::size_t>(n + 1) * cfg.embed);
  for (double& v : pos) v = rng.normal(0.0, 0.02);
  pos_embed = register_parameter("pos_embed", Tensor::from({n + 1, cfg.embed}, std::move(pos)));
  std::vector<double> cls(static_cast<std::size_t>(cfg.embed));
  for (double& v : cls) v = rng.normal(0.0, 0.02);
  cls_token = register_parameter("cls_token", Tensor::from({cfg.embed}, std::move(cls)));
  for (int i = 0; i < cfg.depth; ++i) {
    blocks_.push_back(std::make_unique<TransformerBlock>(cfg.embed, cfg.heads, cfg.mlp_ratio, rng));
    register_module("blocks." + std::to_string(i), *blocks_.back());
  }
  register_module("norm", norm_);
  set_block_windows(window_layout(cfg.depth, cfg.window));
  set_patch_embed_frozen(cfg.frozen_patch_embed);
}

void ViTEncoder::set_block_windows(const std::vector<int>& windows) {
  require(static_cast<int>(windows.size()) == cfg_.depth, "one window size per block is required");
  masks_.clear();
  for (int w : windows) masks_.push_back(w > 0 ? window_mask(grid(), w) : Tensor());
}

void ViTEncoder::set_patch_embed_frozen(bool frozen) {
  cfg_.frozen_patch_embed = frozen;
  patch_embed_.set_requires_grad(!frozen);
}

Tensor ViTEncoder::embed(const Tensor& x) {
  require(x.ndim() == 4 && x.dim(1) == 3 && x.dim(2) == cfg_.image && x.dim(3) == cfg_.image,
          "ViT expects [B, 3, " + std::to_string(cfg_.image) + ", " + std::to_string(cfg_.image) + "], got " +
              shape_str(x.shape()));
  const int n = grid() * grid();
  Tensor tokens = patch_embed_.forward(ops::patchify(x, cfg_.patch));
  return ops::add(tokens, ops::slice(pos_embed, 0, 1, n));
}

Features ViTEncoder::forward(const Tensor& x) {
  const int b = x.dim(0);
  const int g = grid();
  const int n = g * g;
  Tensor cls = ops::add(cls_token, ops::reshape(ops::slice(pos_embed, 0, 0, 1), {cfg_.embed}));
  Tensor h = prepend_token(embed(x), cls);
  const int every = std::max(1, cfg_.depth / 4);
  Features f;
  for (int i = 0; i < cfg_.depth; ++i) {
    h = blocks_[static_cast<std::size_t>(i)]->forward(h, masks_[static_cast<std::size_t>(i)]);
    if ((i + 1) % every == 0) {
      Tensor grid_tokens = ops::reshape(ops::slice(h, 1, 1, n), {b, g, g, cfg_.embed});
      f.taps.push_back(ops::permute(grid_tokens, {0, 3, 1, 2}));
    }
  }
  while (f.taps.size() > 4) f.taps.erase(f.taps.begin());
  h = norm_.forward(h);
  f.pooled = ops::reshape(ops::slice(h, 1, 0, 1), {b, cfg_.embed});
  return f;
}

Tensor ViTEncoder::forward_masked(const Tensor& x, const std::vector<MaskingPlan>& plans) {
  const int b = x.dim(0);
  require(static_cast<int>(plans.size()) == b, "one masking plan per sample is required");
  const int n = grid() * grid();
  const int keep = plans.front().n_keep;
  std::vector<int> index;
  for (const auto& p : plans) {
    require(p.n_p == n && p.n_keep == keep, "masking plans must share the token count and kept count");
    index.insert(index.end(), p.sigma.begin(), p.sigma.begin() + keep);
  }
  Tensor kept = ops::gather_tokens(embed(x), index, keep);
  Tensor cls = ops::add(cls_token, ops::reshape(ops::slice(pos_embed, 0, 0, 1), {cfg_.embed}));
  Tensor h = prepend_token(kept, cls);
  for (auto& block : blocks_) h = block->forward(h, Tensor());
  return norm_.forward(h);
}

void ViTEncoder::load_pos_embed(const Tensor& pos) {
  Tensor resized = pos.shape() == pos_embed.shape() ? pos : interpolate_pos_embed(pos, grid());
  require(resized.shape() == pos_embed.shape(), "position embedding width mismatch");
  std::copy(resized.values().begin(), resized.values().end(), pos_embed.values().begin());
}

json ViTEncoder::describe() const {
  return {{"arch", "vit"},       {"image", cfg_.image},   {"patch", cfg_.patch},
          {"embed", cfg_.embed}, {"depth", cfg_.depth},   {"heads", cfg_.heads},
          {"mlp_ratio", cfg_.mlp_ratio}, {"window", cfg_.window}};
}

Tensor interpolate_pos_embed(const Tensor& pos, int new_grid) {
  require(pos.ndim() == 2, "position embedding must be [1 + g*g, D]");
  const int n = pos.dim(0) - 1;
  const int d = pos.dim(1);
  const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  require(g * g == n, "position embedding grid is not square (" + std::to_string(n) + " tokens)");
  require(new_grid > 0, "target grid must be positive");
  if (g == new_grid) return pos;
  Tensor cls = ops::slice(pos, 0, 0, 1);
  Tensor grid = ops::permute(ops::reshape(ops::slice(pos, 0, 1, n), {1, g, g, d}), {0, 3, 1, 2});
  Tensor resized = ops::resize_bilinear(grid, new_grid, new_grid);
  Tensor back = ops::reshape(ops::permute(resized, {0, 2, 3, 1}), {new_grid * new_grid, d});
  return ops::concat({cls, back}, 0);
}

EmaShadow::EmaShadow(const nn::Module& online, nn::Module& shadow, double momentum)
    : online_(online), shadow_(shadow), momentum_(momentum) {
  require(momentum >= 0.0 && momentum <= 1.0, "EMA momentum must lie in [0, 1]");
  shadow_.copy_state_from(online_);
  shadow_.set_requires_grad(false);
}

void EmaShadow::update() { ema_update(online_.parameters(), shadow_.parameters(), momentum_); }

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg, Rng& rng) {
  if (cfg.arch == "conv") return std::make_unique<ConvEncoder>(cfg.conv, rng);
  if (cfg.arch == "vit") return std::make_unique<ViTEncoder>(cfg.vit, rng);
  throw ValidationError("unknown encoder architecture '" + cfg.arch + "' (expected conv|vit)");
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.arch = j.at("arch").get<std::string>();
  if (c.arch == "conv") {
    c.conv.stem = j.at("stem").get<int>();
    c.conv.widths = j.at("widths").get<std::vector<int>>();
    c.conv.blocks = j.at("blocks").get<int>();
  } else {
    c.vit.image = j.at("image").get<int>();
    c.vit.patch = j.at("patch").get<int>();
    c.vit.embed = j.at("embed").get<int>();
    c.vit.depth = j.at("depth").get<int>();
    c.vit.heads = j.at("heads").get<int>();
    c.vit.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.vit.window = j.at("window").get<int>();
  }
  return c;
}

}  // namespace sslbench
