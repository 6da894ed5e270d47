#include "sslbench/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>

#include "sslbench/errors.hpp"

namespace sslbench {
namespace {

// Keys cubic with a = -0.5, the kernel PIL and torchvision use for
// antialiased bicubic resampling.
double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Taps {
  int first;
  std::vector<double> w;
};

// Separable antialiased filter taps: the kernel support is stretched by the
// downscale factor so every source pixel contributes.
std::vector<Taps> cubic_taps(int in, int out) {
  const double scale = static_cast<double>(in) / out;
  const double fscale = std::max(scale, 1.0);
  const double support = 2.0 * fscale;
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    const double center = (o + 0.5) * scale;
    int lo = static_cast<int>(std::floor(center - support + 0.5));
    int hi = static_cast<int>(std::floor(center + support + 0.5));
    lo = std::max(lo, 0);
    hi = std::min(hi, in);
    Taps t{lo, {}};
    double total = 0.0;
    for (int i = lo; i < hi; ++i) {
      const double wv = cubic((i - center + 0.5) / fscale);
      t.w.push_back(wv);
      total += wv;
    }
    if (total != 0.0)
      for (double& wv : t.w) wv /= total;
    taps[static_cast<std::size_t>(o)] = std::move(t);
  }
  return taps;
}

Image resize_cubic(const Image& src, int out_h, int out_w) {
  const auto tx = cubic_taps(src.width, out_w);
  const auto ty = cubic_taps(src.height, out_h);
  Image horiz(src.channels, src.height, out_w);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < out_w; ++x) {
        const Taps& t = tx[static_cast<std::size_t>(x)];
        double s = 0.0;
        for (std::size_t k = 0; k < t.w.size(); ++k) s += t.w[k] * src.at(c, y, t.first + static_cast<int>(k));
        horiz.at(c, y, x) = static_cast<float>(s);
      }
  Image out(src.channels, out_h, out_w);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < out_h; ++y) {
      const Taps& t = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < out_w; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < t.w.size(); ++k) s += t.w[k] * horiz.at(c, t.first + static_cast<int>(k), x);
        out.at(c, y, x) = static_cast<float>(s);
      }
    }
  return out;
}

double source_coord(int o, double scale) { return std::max((o + 0.5) * scale - 0.5, 0.0); }

Image resize_bilinear_img(const Image& src, int out_h, int out_w) {
  Image out(src.channels, out_h, out_w);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = source_coord(y, sy);
    const int y0 = std::min(static_cast<int>(fy), src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double ly = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = source_coord(x, sx);
      const int x0 = std::min(static_cast<int>(fx), src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double lx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1.0 - lx) * src.at(c, y0, x0) + lx * src.at(c, y0, x1);
        const double bot = (1.0 - lx) * src.at(c, y1, x0) + lx * src.at(c, y1, x1);
        out.at(c, y, x) = static_cast<float>((1.0 - ly) * top + ly * bot);
      }
    }
  }
  return out;
}

Image resize_nearest(const Image& src, int out_h, int out_w) {
  Image out(src.channels, out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(static_cast<int>(std::floor(y * static_cast<double>(src.height) / out_h)), src.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(static_cast<int>(std::floor(x * static_cast<double>(src.width) / out_w)), src.width - 1);
      for (int c = 0; c < src.channels; ++c) out.at(c, y, x) = src.at(c, sy, sx);
    }
  }
  return out;
}

float sample(const Image& src, int c, double fx, double fy, Interp interp, float fill) {
  // (fx, fy) in pixel-index coordinates (pixel centers at integers).
  if (interp == Interp::nearest) {
    const int x = static_cast<int>(std::floor(fx + 0.5));
    const int y = static_cast<int>(std::floor(fy + 0.5));
    if (x < 0 || y < 0 || x >= src.width || y >= src.height) return fill;
    return src.at(c, y, x);
  }
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double lx = fx - x0;
  const double ly = fy - y0;
  auto px = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= src.width || y >= src.height) return fill;
    return src.at(c, y, x);
  };
  const double top = (1.0 - lx) * px(x0, y0) + lx * px(x0 + 1, y0);
  const double bot = (1.0 - lx) * px(x0, y0 + 1) + lx * px(x0 + 1, y0 + 1);
  return static_cast<float>((1.0 - ly) * top + ly * bot);
}

struct PngFile {
  std::FILE* fp = nullptr;
  ~PngFile() {
    if (fp) std::fclose(fp);
  }
};

}  // namespace

Image resize(const Image& src, int out_h, int out_w, Interp interp) {
  require(!src.empty() && out_h > 0 && out_w > 0, "resize: empty image or non-positive target size");
  if (src.height == out_h && src.width == out_w) return src;
  switch (interp) {
    case Interp::nearest:
      return resize_nearest(src, out_h, out_w);
    case Interp::bilinear:
      return resize_bilinear_img(src, out_h, out_w);
    case Interp::bicubic_antialias:
      return resize_cubic(src, out_h, out_w);
  }
  return src;
}

Image pad_to_square(const Image& src, float fill) {
  const int side = std::max(src.height, src.width);
  Image out(src.channels, side, side, fill);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) out.at(c, y, x) = src.at(c, y, x);
  return out;
}

Image crop(const Image& src, int y0, int x0, int h, int w) {
  require(y0 >= 0 && x0 >= 0 && y0 + h <= src.height && x0 + w <= src.width, "crop: window outside image");
  Image out(src.channels, h, w);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = src.at(c, y0 + y, x0 + x);
  return out;
}

Image flip_horizontal(const Image& src) {
  Image out(src.channels, src.height, src.width);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) out.at(c, y, x) = src.at(c, y, src.width - 1 - x);
  return out;
}

Image flip_vertical(const Image& src) {
  Image out(src.channels, src.height, src.width);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) out.at(c, y, x) = src.at(c, src.height - 1 - y, x);
  return out;
}

Image rotate90(const Image& src) {
  Image out(src.channels, src.width, src.height);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) out.at(c, y, x) = src.at(c, x, src.width - 1 - y);
  return out;
}

Affine2 Affine2::inverse() const {
  const double det = m[0] * m[3] - m[1] * m[2];
  require(std::abs(det) > 1e-12, "affine transform is singular");
  Affine2 inv;
  inv.m = {m[3] / det, -m[1] / det, -m[2] / det, m[0] / det};
  inv.t = {-(inv.m[0] * t[0] + inv.m[1] * t[1]), -(inv.m[2] * t[0] + inv.m[3] * t[1])};
  return inv;
}

std::array<double, 2> Affine2::apply(double x, double y, double cx, double cy) const {
  const double dx = x - cx;
  const double dy = y - cy;
  return {m[0] * dx + m[1] * dy + cx + t[0], m[2] * dx + m[3] * dy + cy + t[1]};
}

Image warp(const Image& src, const Affine2& forward, Interp interp, float fill) {
  const Affine2 inv = forward.inverse();
  const double cx = src.width / 2.0;
  const double cy = src.height / 2.0;
  Image out(src.channels, src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      const auto p = inv.apply(x + 0.5, y + 0.5, cx, cy);
      for (int c = 0; c < src.channels; ++c) out.at(c, y, x) = sample(src, c, p[0] - 0.5, p[1] - 0.5, interp, fill);
    }
  return out;
}

Image read_png(const std::filesystem::path& path) {
  PngFile file;
  file.fp = std::fopen(path.c_str(), "rb");
  if (!file.fp) throw RuntimeError("cannot open PNG " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw RuntimeError("libpng initialisation failed");
  }
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  int depth = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw RuntimeError("corrupt PNG " + path.string());
  }
  png_init_io(png, file.fp);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(channels, static_cast<int>(height), static_cast<int>(width));
  const double maxv = depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < channels; ++c) {
        const std::size_t k = static_cast<std::size_t>(x) * channels + c;
        const unsigned char* row = rows[static_cast<std::size_t>(y)];
        const double v = depth == 16 ? (row[2 * k] << 8 | row[2 * k + 1]) : row[k];
        img.at(c, y, x) = static_cast<float>(v / maxv);
      }
  return img;
}

namespace {

void write_png(const std::filesystem::path& path, const Image& img, int color, int depth) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  PngFile file;
  file.fp = std::fopen(path.c_str(), "wb");
  if (!file.fp) throw RuntimeError("cannot write PNG " + path.string());
  const int channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  require(img.channels == channels, "write_png: channel count mismatch for " + path.string());
  const int bytes = depth / 8;
  const double maxv = depth == 16 ? 65535.0 : 255.0;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(img.height) * img.width * channels * bytes);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < channels; ++c) {
        const double v = std::clamp(static_cast<double>(img.at(c, y, x)), 0.0, 1.0);
        const auto q = static_cast<unsigned>(std::lround(v * maxv));
        const std::size_t k = ((static_cast<std::size_t>(y) * img.width + x) * channels + c) * bytes;
        if (bytes == 2) {
          pixels[k] = static_cast<unsigned char>(q >> 8);
          pixels[k + 1] = static_cast<unsigned char>(q & 0xff);
        } else {
          pixels[k] = static_cast<unsigned char>(q);
        }
      }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  const std::size_t stride = static_cast<std::size_t>(img.width) * channels * bytes;
  for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = pixels.data() + y * stride;

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw RuntimeError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw RuntimeError("failed writing PNG " + path.string());
  }
  png_init_io(png, file.fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_rgb8(const std::filesystem::path& path, const Image& img) { write_png(path, img, PNG_COLOR_TYPE_RGB, 8); }
void write_png_gray8(const std::filesystem::path& path, const Image& img) { write_png(path, img, PNG_COLOR_TYPE_GRAY, 8); }
void write_png_gray16(const std::filesystem::path& path, const Image& img) {
  write_png(path, img, PNG_COLOR_TYPE_GRAY, 16);
}

}  // namespace sslbench
