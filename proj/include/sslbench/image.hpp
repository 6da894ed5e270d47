#pragma once

#include <array>
#include <filesystem>
#include <vector>

namespace sslbench {

// Planar (CHW) float image. RGB values live in [0, 1] until normalization;
// masks hold 0/1, depth maps hold unit-range depth.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  bool empty() const { return data.empty(); }
  bool operator==(const Image&) const = default;
};

enum class Interp { nearest, bilinear, bicubic_antialias };

Image resize(const Image& src, int out_h, int out_w, Interp interp);
// Pads at the bottom/right with `fill` to max(h, w) square.
Image pad_to_square(const Image& src, float fill = 0.0f);
Image crop(const Image& src, int y0, int x0, int h, int w);
Image flip_horizontal(const Image& src);
Image flip_vertical(const Image& src);
// Counter-clockwise quarter turn: out(y, x) = in(x, W - 1 - y); swaps H and W.
Image rotate90(const Image& src);

// Inverse-mapped warp: out(p) = src(A * (p - c) + c) sampled at pixel
// centers, where c is the image center and A is the given 2x2 inverse matrix
// plus translation. Outside samples take `fill`.
struct Affine2 {
  std::array<double, 4> m{1.0, 0.0, 0.0, 1.0};  // row-major 2x2 (forward map)
  std::array<double, 2> t{0.0, 0.0};            // forward translation in pixels
  Affine2 inverse() const;
  std::array<double, 2> apply(double x, double y, double cx, double cy) const;
};
Image warp(const Image& src, const Affine2& forward, Interp interp, float fill = 0.0f);

// PNG codecs (libpng). 8-bit RGB, 8-bit gray, and 16-bit gray.
Image read_png(const std::filesystem::path& path);  // values scaled to [0, 1]
void write_png_rgb8(const std::filesystem::path& path, const Image& img);
void write_png_gray8(const std::filesystem::path& path, const Image& img);
void write_png_gray16(const std::filesystem::path& path, const Image& img);

}  // namespace sslbench
