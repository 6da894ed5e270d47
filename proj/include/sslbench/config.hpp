#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "sslbench/augment.hpp"
#include "sslbench/encoders.hpp"
#include "sslbench/ssl_losses.hpp"
#include "sslbench/trainer.hpp"

namespace sslbench {

// Flat `key = value` experiment description; '#' starts a comment. Relative
// paths resolve against the config file's directory.
//
//   task                      classification | segmentation | depth (finetune)
//   seed                      integer
//   image.side                network input side (default 64)
//   data.manifest             dataset manifest
//   data.tag                  domain | general (pretraining set label)
//   data.ratios               val/test split ratios when records are untagged, "0.8,0.1,0.1"
//   encoder.arch              conv | vit
//   encoder.stem, encoder.widths, encoder.blocks
//   encoder.patch, encoder.embed, encoder.depth, encoder.heads,
//   encoder.mlp_ratio, encoder.window, encoder.frozen_patch_embed
//   ssl.algorithm             mocov3 | barlow | mae | supervised (pretrain)
//   ssl.tau, ssl.lambda, ssl.gamma, ssl.momentum, ssl.workers, ssl.per_worker_batch
//   pretraining.checkpoint    none | supervised-proxy | run:<hash> | <path>
//   pretraining.manifest      labelled set for inline supervised-proxy
//   pretraining.data          data tag for inline supervised-proxy (default general)
//   pretraining.epochs        epochs for inline supervised-proxy
//   train.batch, train.lr, train.weight_decay, train.patience, train.lr_floor,
//   train.epochs, train.augment
//   loss.grad_weight, loss.grad_scales
//   heads.seg_blocks, heads.depth_blocks, heads.dense_widths
//   output.root               run store root (SSLBENCH_OUT takes precedence)
class ExperimentConfig {
 public:
  static ExperimentConfig parse(const std::string& text, const std::filesystem::path& dir);
  static ExperimentConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::filesystem::path path(const std::string& key) const;  // resolved, must exist

  // Canonical text (sorted keys, output.root excluded) and its hash. Both
  // are independent of key order, whitespace and comments.
  std::string canonical() const;
  std::string hash() const;

  TaskKind task() const;
  std::uint64_t seed() const;
  EncoderConfig encoder() const;
  SSLConfig ssl() const;
  TrainConfig train() const;
  AugmentConfig augment() const;
  std::array<double, 3> ratios() const;
  std::filesystem::path output_root() const;  // empty when unset
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path dir_;
};

}  // namespace sslbench
