#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sslbench/data.hpp"
#include "sslbench/image.hpp"

namespace sslbench {

struct AugmentConfig {
  int side = 64;
  std::array<double, 2> brightness{0.4, 0.6};
  std::array<double, 2> contrast{0.5, 1.5};
  std::array<double, 2> saturation{0.75, 1.25};
  std::array<double, 2> hue{0.99, 1.01};
  int blur_kernel = 25;
  std::array<double, 2> blur_sigma{0.001, 2.0};
  double rot90_p = 0.5;
  double hflip_p = 0.5;
  double vflip_p = 0.5;
  double rotation_deg = 180.0;
  double translate_frac = 0.125;  // of the side; 28 px at 224
  std::array<double, 2> scale{0.5, 1.5};
  double shear_deg = 22.5;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  // Every random op pinned to its no-op value.
  static AugmentConfig identity(int side);
};

enum class OpKind { pad, resize, jitter, blur, rot90, hflip, vflip, rotate, affine, normalize };
std::string to_string(OpKind kind);

struct TransformOp {
  OpKind kind;
  // pad: {side}; resize: {h, w}; jitter: {brightness, contrast, saturation,
  // hue}; blur: {sigma}; rotate: {degrees}; affine: {tx, ty, scale, shear};
  // rot90/hflip/vflip/normalize: {}.
  std::vector<double> params;
};

// Only ops that actually ran are recorded.
struct TransformRecord {
  int in_h = 0;
  int in_w = 0;
  std::vector<TransformOp> ops;
};

struct Augmented {
  Image image;
  TransformRecord record;
};

// Table-order training pipeline for `task`. Pure given the seed.
Augmented preprocess_train(const Image& image, TaskKind task, std::uint64_t seed, const AugmentConfig& cfg);
// Deterministic eval path: pad (depth), resize (all but detection), normalize.
Augmented preprocess_eval(const Image& image, TaskKind task, const AugmentConfig& cfg);
// Re-runs a record on an RGB image.
Image replay(const Image& image, const TransformRecord& record, const AugmentConfig& cfg);

struct ViewPair {
  Image x1;
  Image x2;
  TransformRecord r1;
  TransformRecord r2;
};
// Two independent draws of the classification pipeline.
ViewPair make_view_pair(const Image& image, std::uint64_t seed, const AugmentConfig& cfg);

// Geometric ops of a record applied to targets; photometric ops skipped.
struct BoxTransformResult {
  std::vector<Box> boxes;
  int dropped = 0;
};
BoxTransformResult apply_to_boxes(const TransformRecord& record, const std::vector<Box>& boxes);
Image apply_to_mask(const TransformRecord& record, const Image& mask);
// Depth is clamped to the unit range after resampling.
Image apply_to_depth(const TransformRecord& record, const Image& depth);

// Photometric pieces, exposed for testing.
Image color_jitter(const Image& rgb, double brightness, double contrast, double saturation, double hue);
Image gaussian_blur(const Image& img, int kernel, double sigma);
Image normalize(const Image& rgb, const AugmentConfig& cfg);

// The forward map (about the image center) of the continuous rotation and
// affine ops, as used for both images and targets.
Affine2 rotation_affine(double degrees);
Affine2 shear_scale_affine(double tx, double ty, double scale, double shear_deg);

}  // namespace sslbench
