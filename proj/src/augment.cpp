#include "sslbench/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sslbench/errors.hpp"
#include "sslbench/rng.hpp"

namespace sslbench {

AugmentConfig AugmentConfig::identity(int side) {
  AugmentConfig c;
  c.side = side;
  c.brightness = {1.0, 1.0};
  c.contrast = {1.0, 1.0};
  c.saturation = {1.0, 1.0};
  c.hue = {1.0, 1.0};
  c.blur_sigma = {0.001, 0.001};
  c.rot90_p = 0.0;
  c.hflip_p = 0.0;
  c.vflip_p = 0.0;
  c.rotation_deg = 0.0;
  c.translate_frac = 0.0;
  c.scale = {1.0, 1.0};
  c.shear_deg = 0.0;
  return c;
}

std::string to_string(OpKind kind) {
  switch (kind) {
    case OpKind::pad:
      return "pad";
    case OpKind::resize:
      return "resize";
    case OpKind::jitter:
      return "jitter";
    case OpKind::blur:
      return "blur";
    case OpKind::rot90:
      return "rot90";
    case OpKind::hflip:
      return "hflip";
    case OpKind::vflip:
      return "vflip";
    case OpKind::rotate:
      return "rotate";
    case OpKind::affine:
      return "affine";
    case OpKind::normalize:
      return "normalize";
  }
  return "?";
}

namespace {

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

Image clamp01(Image img) {
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

float gray(const Image& img, int y, int x) {
  return 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = (g - b) / d;
  else if (mx == g)
    h = 2.0 + (b - r) / d;
  else
    h = 4.0 + (r - g) / d;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double h6 = h * 6.0;
  const int i = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0:
      r = v, g = t, b = p;
      break;
    case 1:
      r = q, g = v, b = p;
      break;
    case 2:
      r = p, g = v, b = t;
      break;
    case 3:
      r = p, g = q, b = v;
      break;
    case 4:
      r = t, g = p, b = v;
      break;
    default:
      r = v, g = p, b = q;
  }
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i >= n ? period - i : i;
}

// Continuous point map of one geometric op plus the size it produces.
struct Geo {
  int h;
  int w;
};

// Forward point map for a geometric op on an image of size (h, w).
std::array<double, 2> map_point(const TransformOp& op, double x, double y, int h, int w) {
  switch (op.kind) {
    case OpKind::resize:
      return {x * op.params[1] / w, y * op.params[0] / h};
    case OpKind::rot90:
      return {y, w - x};
    case OpKind::hflip:
      return {w - x, y};
    case OpKind::vflip:
      return {x, h - y};
    case OpKind::rotate:
      return rotation_affine(op.params[0]).apply(x, y, w / 2.0, h / 2.0);
    case OpKind::affine:
      return shear_scale_affine(op.params[0], op.params[1], op.params[2], op.params[3]).apply(x, y, w / 2.0, h / 2.0);
    default:
      return {x, y};
  }
}

Geo next_size(const TransformOp& op, Geo g) {
  switch (op.kind) {
    case OpKind::pad:
      return {static_cast<int>(op.params[0]), static_cast<int>(op.params[0])};
    case OpKind::resize:
      return {static_cast<int>(op.params[0]), static_cast<int>(op.params[1])};
    case OpKind::rot90:
      return {g.w, g.h};
    default:
      return g;
  }
}

// Geometric replay shared by masks and depth maps.
Image replay_geometric(const Image& src, const TransformRecord& rec, Interp interp) {
  require(src.height == rec.in_h && src.width == rec.in_w,
          "target size " + std::to_string(src.height) + "x" + std::to_string(src.width) +
              " does not match the transformed image " + std::to_string(rec.in_h) + "x" + std::to_string(rec.in_w));
  Image img = src;
  for (const auto& op : rec.ops) {
    switch (op.kind) {
      case OpKind::pad:
        img = pad_to_square(img, 0.0f);
        break;
      case OpKind::resize:
        img = resize(img, static_cast<int>(op.params[0]), static_cast<int>(op.params[1]), interp);
        break;
      case OpKind::rot90:
        img = rotate90(img);
        break;
      case OpKind::hflip:
        img = flip_horizontal(img);
        break;
      case OpKind::vflip:
        img = flip_vertical(img);
        break;
      case OpKind::rotate:
        img = warp(img, rotation_affine(op.params[0]), interp, 0.0f);
        break;
      case OpKind::affine:
        img = warp(img, shear_scale_affine(op.params[0], op.params[1], op.params[2], op.params[3]), interp, 0.0f);
        break;
      default:
        break;
    }
  }
  return img;
}

bool in_column(OpKind kind, TaskKind task) {
  switch (kind) {
    case OpKind::pad:
      return task == TaskKind::depth;
    case OpKind::resize:
      return task != TaskKind::detection;
    case OpKind::blur:
      return task != TaskKind::depth;
    case OpKind::rot90:
      return task == TaskKind::detection;
    case OpKind::rotate:
      return task == TaskKind::classification || task == TaskKind::segmentation;
    case OpKind::affine:
      return task == TaskKind::segmentation;
    default:
      return true;
  }
}

}  // namespace

Affine2 rotation_affine(double degrees) {
  const double a = deg2rad(degrees);
  Affine2 t;
  t.m = {std::cos(a), std::sin(a), -std::sin(a), std::cos(a)};
  return t;
}

Affine2 shear_scale_affine(double tx, double ty, double scale, double shear_deg) {
  Affine2 t;
  const double sh = std::tan(deg2rad(shear_deg));
  t.m = {scale, scale * sh, 0.0, scale};
  t.t = {tx, ty};
  return t;
}

Image color_jitter(const Image& rgb, double brightness, double contrast, double saturation, double hue) {
  require(rgb.channels == 3, "colour jitter needs an RGB image");
  Image img = rgb;
  if (brightness != 1.0)
    for (float& v : img.data) v = std::clamp(static_cast<float>(v * brightness), 0.0f, 1.0f);
  if (contrast != 1.0) {
    double mean = 0.0;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) mean += gray(img, y, x);
    mean /= static_cast<double>(img.height) * img.width;
    for (float& v : img.data)
      v = std::clamp(static_cast<float>(contrast * v + (1.0 - contrast) * mean), 0.0f, 1.0f);
  }
  if (saturation != 1.0) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const double g = gray(img, y, x);
        for (int c = 0; c < 3; ++c)
          img.at(c, y, x) = std::clamp(static_cast<float>(saturation * img.at(c, y, x) + (1.0 - saturation) * g), 0.0f, 1.0f);
      }
  }
  if (hue != 1.0) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double h, s, v, r, g, b;
        rgb_to_hsv(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x), h, s, v);
        h = std::fmod(h * hue, 1.0);
        hsv_to_rgb(h, s, v, r, g, b);
        img.at(0, y, x) = static_cast<float>(r);
        img.at(1, y, x) = static_cast<float>(g);
        img.at(2, y, x) = static_cast<float>(b);
      }
  }
  return img;
}

Image gaussian_blur(const Image& img, int kernel, double sigma) {
  require(kernel > 0 && kernel % 2 == 1, "blur kernel size must be odd and positive");
  require(sigma > 0.0, "blur sigma must be positive");
  const int half = kernel / 2;
  std::vector<double> w(static_cast<std::size_t>(kernel));
  double total = 0.0;
  for (int i = 0; i < kernel; ++i) {
    const double d = i - half;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= total;
  Image tmp(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double s = 0.0;
        for (int i = 0; i < kernel; ++i) s += w[static_cast<std::size_t>(i)] * img.at(c, y, reflect(x + i - half, img.width));
        tmp.at(c, y, x) = static_cast<float>(s);
      }
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double s = 0.0;
        for (int i = 0; i < kernel; ++i) s += w[static_cast<std::size_t>(i)] * tmp.at(c, reflect(y + i - half, img.height), x);
        out.at(c, y, x) = static_cast<float>(s);
      }
  return out;
}

Image normalize(const Image& rgb, const AugmentConfig& cfg) {
  require(rgb.channels == 3, "normalization needs an RGB image");
  Image out = rgb;
  for (int c = 0; c < 3; ++c) {
    const std::size_t plane = static_cast<std::size_t>(rgb.height) * rgb.width;
    for (std::size_t i = 0; i < plane; ++i) {
      float& v = out.data[static_cast<std::size_t>(c) * plane + i];
      v = static_cast<float>((v - cfg.mean[static_cast<std::size_t>(c)]) / cfg.std[static_cast<std::size_t>(c)]);
    }
  }
  return out;
}

Image replay(const Image& image, const TransformRecord& rec, const AugmentConfig& cfg) {
  require(image.height == rec.in_h && image.width == rec.in_w, "replay: image size differs from the record");
  Image img = image;
  for (const auto& op : rec.ops) {
    const auto& p = op.params;
    switch (op.kind) {
      case OpKind::pad:
        img = pad_to_square(img, 0.0f);
        break;
      case OpKind::resize:
        img = clamp01(resize(img, static_cast<int>(p[0]), static_cast<int>(p[1]), Interp::bicubic_antialias));
        break;
      case OpKind::jitter:
        img = color_jitter(img, p[0], p[1], p[2], p[3]);
        break;
      case OpKind::blur:
        img = gaussian_blur(img, cfg.blur_kernel, p[0]);
        break;
      case OpKind::rot90:
        img = rotate90(img);
        break;
      case OpKind::hflip:
        img = flip_horizontal(img);
        break;
      case OpKind::vflip:
        img = flip_vertical(img);
        break;
      case OpKind::rotate:
        img = warp(img, rotation_affine(p[0]), Interp::bilinear, 0.0f);
        break;
      case OpKind::affine:
        img = warp(img, shear_scale_affine(p[0], p[1], p[2], p[3]), Interp::bilinear, 0.0f);
        break;
      case OpKind::normalize:
        img = normalize(img, cfg);
        break;
    }
  }
  return img;
}

Augmented preprocess_train(const Image& image, TaskKind task, std::uint64_t seed, const AugmentConfig& cfg) {
  require(image.height > 0 && image.width > 0 && image.channels == 3, "preprocess: expects a non-empty RGB image");
  Rng rng(derive_seed(seed, 0xa09));
  TransformRecord rec;
  rec.in_h = image.height;
  rec.in_w = image.width;
  int h = image.height;
  int w = image.width;
  if (in_column(OpKind::pad, task)) {
    const int side = std::max(h, w);
    rec.ops.push_back({OpKind::pad, {static_cast<double>(side)}});
    h = w = side;
  }
  if (in_column(OpKind::resize, task)) {
    rec.ops.push_back({OpKind::resize, {static_cast<double>(cfg.side), static_cast<double>(cfg.side)}});
    h = w = cfg.side;
  }
  const double b = rng.uniform(cfg.brightness[0], cfg.brightness[1]);
  const double c = rng.uniform(cfg.contrast[0], cfg.contrast[1]);
  const double s = rng.uniform(cfg.saturation[0], cfg.saturation[1]);
  const double hu = rng.uniform(cfg.hue[0], cfg.hue[1]);
  rec.ops.push_back({OpKind::jitter, {b, c, s, hu}});
  if (in_column(OpKind::blur, task))
    rec.ops.push_back({OpKind::blur, {rng.uniform(cfg.blur_sigma[0], cfg.blur_sigma[1])}});
  if (in_column(OpKind::rot90, task) && rng.bernoulli(cfg.rot90_p)) {
    rec.ops.push_back({OpKind::rot90, {}});
    std::swap(h, w);
  }
  if (rng.bernoulli(cfg.hflip_p)) rec.ops.push_back({OpKind::hflip, {}});
  if (rng.bernoulli(cfg.vflip_p)) rec.ops.push_back({OpKind::vflip, {}});
  if (in_column(OpKind::rotate, task)) {
    const double angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
    if (angle != 0.0) rec.ops.push_back({OpKind::rotate, {angle}});
  }
  if (in_column(OpKind::affine, task)) {
    const double tx = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * w;
    const double ty = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * h;
    const double sc = rng.uniform(cfg.scale[0], cfg.scale[1]);
    const double sh = rng.uniform(-cfg.shear_deg, cfg.shear_deg);
    if (tx != 0.0 || ty != 0.0 || sc != 1.0 || sh != 0.0) rec.ops.push_back({OpKind::affine, {tx, ty, sc, sh}});
  }
  rec.ops.push_back({OpKind::normalize, {}});
  Augmented out;
  out.image = replay(image, rec, cfg);
  out.record = std::move(rec);
  return out;
}

Augmented preprocess_eval(const Image& image, TaskKind task, const AugmentConfig& cfg) {
  require(image.height > 0 && image.width > 0 && image.channels == 3, "preprocess: expects a non-empty RGB image");
  TransformRecord rec;
  rec.in_h = image.height;
  rec.in_w = image.width;
  if (in_column(OpKind::pad, task)) rec.ops.push_back({OpKind::pad, {static_cast<double>(std::max(image.height, image.width))}});
  if (in_column(OpKind::resize, task))
    rec.ops.push_back({OpKind::resize, {static_cast<double>(cfg.side), static_cast<double>(cfg.side)}});
  rec.ops.push_back({OpKind::normalize, {}});
  Augmented out;
  out.image = replay(image, rec, cfg);
  out.record = std::move(rec);
  return out;
}

ViewPair make_view_pair(const Image& image, std::uint64_t seed, const AugmentConfig& cfg) {
  Augmented a = preprocess_train(image, TaskKind::classification, derive_seed(seed, 1), cfg);
  Augmented b = preprocess_train(image, TaskKind::classification, derive_seed(seed, 2), cfg);
  return {std::move(a.image), std::move(b.image), std::move(a.record), std::move(b.record)};
}

BoxTransformResult apply_to_boxes(const TransformRecord& rec, const std::vector<Box>& boxes) {
  BoxTransformResult out;
  for (const Box& box : boxes) {
    require(box.x_max > box.x_min && box.y_max > box.y_min, "degenerate box");
    std::array<std::array<double, 2>, 4> pts = {{{box.x_min, box.y_min},
                                                {box.x_max, box.y_min},
                                                {box.x_min, box.y_max},
                                                {box.x_max, box.y_max}}};
    Geo g{rec.in_h, rec.in_w};
    for (const auto& op : rec.ops) {
      for (auto& p : pts) p = map_point(op, p[0], p[1], g.h, g.w);
      // Rotations and shears do not keep boxes axis aligned: re-box after
      // each op so later ops see the tight box of the transformed corners.
      double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
      for (const auto& p : pts) {
        x0 = std::min(x0, p[0]);
        y0 = std::min(y0, p[1]);
        x1 = std::max(x1, p[0]);
        y1 = std::max(y1, p[1]);
      }
      pts = {{{x0, y0}, {x1, y0}, {x0, y1}, {x1, y1}}};
      g = next_size(op, g);
    }
    Box b{std::clamp(pts[0][0], 0.0, static_cast<double>(g.w)), std::clamp(pts[0][1], 0.0, static_cast<double>(g.h)),
          std::clamp(pts[3][0], 0.0, static_cast<double>(g.w)), std::clamp(pts[3][1], 0.0, static_cast<double>(g.h))};
    if (b.x_max > b.x_min && b.y_max > b.y_min)
      out.boxes.push_back(b);
    else
      ++out.dropped;
  }
  return out;
}

Image apply_to_mask(const TransformRecord& rec, const Image& mask) { return replay_geometric(mask, rec, Interp::nearest); }

Image apply_to_depth(const TransformRecord& rec, const Image& depth) {
  return clamp01(replay_geometric(depth, rec, Interp::bilinear));
}

}  // namespace sslbench
