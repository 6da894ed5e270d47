#include "sslbench/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "sslbench/errors.hpp"
#include "sslbench/kernels.hpp"

namespace sslbench::ops {
namespace {

bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

// For every output element of a permutation, the flat index of its source.
std::vector<std::int64_t> permute_map(const Shape& in, const std::vector<int>& perm) {
  const std::size_t n = in.size();
  std::vector<std::int64_t> in_strides(n, 1);
  for (std::size_t i = n; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out(n);
  std::vector<std::int64_t> step(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = in[sz(perm[i])];
    step[i] = in_strides[sz(perm[i])];
  }
  std::vector<std::int64_t> map(sz(numel(in)));
  std::vector<int> counter(n, 0);
  std::int64_t src = 0;
  for (std::size_t flat = 0; flat < map.size(); ++flat) {
    map[flat] = src;
    for (std::size_t ax = n; ax-- > 0;) {
      if (++counter[ax] < out[ax]) {
        src += step[ax];
        break;
      }
      src -= step[ax] * (out[ax] - 1);
      counter[ax] = 0;
    }
  }
  return map;
}

void im2col(const double* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* col) {
  const std::size_t plane = sz(static_cast<std::int64_t>(ho) * wo);
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* dst = col + sz((static_cast<std::int64_t>(ch) * k + ki) * k + kj) * plane;
        const double* src = x + sz(static_cast<std::int64_t>(ch) * h * w);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          double* drow = dst + sz(static_cast<std::int64_t>(oy) * wo);
          if (iy < 0 || iy >= h) {
            std::fill(drow, drow + wo, 0.0);
            continue;
          }
          const double* srow = src + sz(static_cast<std::int64_t>(iy) * w);
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* x) {
  const std::size_t plane = sz(static_cast<std::int64_t>(ho) * wo);
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* src = col + sz((static_cast<std::int64_t>(ch) * k + ki) * k + kj) * plane;
        double* dst = x + sz(static_cast<std::int64_t>(ch) * h * w);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          const double* srow = src + sz(static_cast<std::int64_t>(oy) * wo);
          double* drow = dst + sz(static_cast<std::int64_t>(iy) * w);
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

struct Lerp {
  int i0;
  int i1;
  double w0;
  double w1;
};

std::vector<Lerp> lerp_table(int in, int out) {
  std::vector<Lerp> t(sz(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const double l = src - i0;
    t[sz(o)] = {i0, i1, 1.0 - l, l};
  }
  return t;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require(is_suffix(a.shape(), b.shape()),
          "add: shape " + shape_str(b.shape()) + " does not broadcast to " + shape_str(a.shape()));
  const std::size_t inner = sz(b.numel());
  const std::size_t total = sz(a.numel());
  std::vector<double> out(a.values().begin(), a.values().end());
  const double* bp = b.data();
  for (std::size_t i = 0; i < total; ++i) out[i] += bp[i % inner];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b, inner, total](const TensorImpl& o) {
    if (double* ga = grad_target(a))
      for (std::size_t i = 0; i < total; ++i) ga[i] += o.grad[i];
    if (double* gb = grad_target(b))
      for (std::size_t i = 0; i < total; ++i) gb[i % inner] += o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require(is_suffix(a.shape(), b.shape()),
          "mul: shape " + shape_str(b.shape()) + " does not broadcast to " + shape_str(a.shape()));
  const std::size_t inner = sz(b.numel());
  const std::size_t total = sz(a.numel());
  std::vector<double> out(total);
  const double* ap = a.data();
  const double* bp = b.data();
  for (std::size_t i = 0; i < total; ++i) out[i] = ap[i] * bp[i % inner];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b, inner, total](const TensorImpl& o) {
    const double* ap = a.data();
    const double* bp = b.data();
    if (double* ga = grad_target(a))
      for (std::size_t i = 0; i < total; ++i) ga[i] += o.grad[i] * bp[i % inner];
    if (double* gb = grad_target(b))
      for (std::size_t i = 0; i < total; ++i) gb[i % inner] += o.grad[i] * ap[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [a, factor](const TensorImpl& o) {
    if (double* ga = grad_target(a))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += factor * o.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v += value;
  return make_result(a.shape(), std::move(out), {a}, [a](const TensorImpl& o) {
    if (double* ga = grad_target(a))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(x.shape(), std::move(out), {x}, [x](const TensorImpl& o) {
    if (double* gx = grad_target(x)) {
      const double* xp = x.data();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        if (xp[i] > 0.0) gx[i] += o.grad[i];
    }
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(sz(x.numel()));
  const double* xp = x.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * xp[i] * (1.0 + std::erf(xp[i] * std::numbers::sqrt2 / 2.0));
  return make_result(x.shape(), std::move(out), {x}, [x](const TensorImpl& o) {
    if (double* gx = grad_target(x)) {
      const double* xp = x.data();
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(xp[i] * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * xp[i] * xp[i]);
        gx[i] += o.grad[i] * (cdf + xp[i] * pdf);
      }
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(sz(x.numel()));
  const double* xp = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xp[i]));
  return make_result(x.shape(), std::move(out), {x}, [x](const TensorImpl& o) {
    if (double* gx = grad_target(x))
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const double y = o.data[i];
        gx[i] += o.grad[i] * y * (1.0 - y);
      }
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t d = sz(x.dim(-1));
  const std::size_t rows = sz(x.numel()) / d;
  std::vector<double> out(sz(x.numel()));
  const double* xp = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xp + r * d;
    double* y = out.data() + r * d;
    const double mx = *std::max_element(row, row + d);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (y[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < d; ++j) y[j] /= s;
  }
  return make_result(x.shape(), std::move(out), {x}, [x, d, rows](const TensorImpl& o) {
    if (double* gx = grad_target(x))
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = o.data.data() + r * d;
        const double* gy = o.grad.data() + r * d;
        double dotv = 0.0;
        for (std::size_t j = 0; j < d; ++j) dotv += gy[j] * y[j];
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[j] * (gy[j] - dotv);
      }
  });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  require(w.ndim() == 2 && x.ndim() >= 1 && x.dim(-1) == w.dim(0),
          "matmul: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(w.shape()));
  const int k = w.dim(0);
  const int n = w.dim(1);
  const int m = static_cast<int>(x.numel() / k);
  Shape shape = x.shape();
  shape.back() = n;
  std::vector<double> out(sz(static_cast<std::int64_t>(m) * n));
  kernels::matmul(false, false, m, n, k, x.data(), w.data(), out.data(), false);
  return make_result(std::move(shape), std::move(out), {x, w}, [x, w, m, n, k](const TensorImpl& o) {
    if (double* gx = grad_target(x)) kernels::matmul(false, true, m, k, n, o.grad.data(), w.data(), gx, true);
    if (double* gw = grad_target(w)) kernels::matmul(true, false, k, n, m, x.data(), o.grad.data(), gw, true);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  return bias.defined() ? add(y, bias) : y;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  require(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0), "bmm: expects two rank-3 tensors with equal batch");
  require(!(trans_a && trans_b), "bmm: transposing both operands is not supported");
  const int batch = a.dim(0);
  const int m = trans_a ? a.dim(2) : a.dim(1);
  const int k = trans_a ? a.dim(1) : a.dim(2);
  const int kb = trans_b ? b.dim(2) : b.dim(1);
  const int n = trans_b ? b.dim(1) : b.dim(2);
  require(k == kb, "bmm: inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t sa = sz(static_cast<std::int64_t>(m) * k);
  const std::size_t sb = sz(static_cast<std::int64_t>(k) * n);
  const std::size_t sc = sz(static_cast<std::int64_t>(m) * n);
  std::vector<double> out(sc * sz(batch));
  for (int i = 0; i < batch; ++i)
    kernels::matmul(trans_a, trans_b, m, n, k, a.data() + i * sa, b.data() + i * sb, out.data() + i * sc, false);
  return make_result({batch, m, n}, std::move(out), {a, b},
                     [=](const TensorImpl& o) {
                       double* ga = grad_target(a);
                       double* gb = grad_target(b);
                       for (int i = 0; i < batch; ++i) {
                         const double* dc = o.grad.data() + i * sc;
                         const double* ap = a.data() + i * sa;
                         const double* bp = b.data() + i * sb;
                         if (!trans_a && !trans_b) {
                           if (ga) kernels::matmul(false, true, m, k, n, dc, bp, ga + i * sa, true);
                           if (gb) kernels::matmul(true, false, k, n, m, ap, dc, gb + i * sb, true);
                         } else if (trans_b) {
                           if (ga) kernels::matmul(false, false, m, k, n, dc, bp, ga + i * sa, true);
                           if (gb) kernels::matmul(true, false, n, k, m, dc, ap, gb + i * sb, true);
                         } else {
                           if (ga) kernels::matmul(false, true, k, m, n, bp, dc, ga + i * sa, true);
                           if (gb) kernels::matmul(false, false, k, n, m, ap, dc, gb + i * sb, true);
                         }
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [x](const TensorImpl& o) {
    if (double* gx = grad_target(x))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  require(static_cast<int>(perm.size()) == x.ndim(), "permute: rank mismatch");
  auto map = std::make_shared<std::vector<std::int64_t>>(permute_map(x.shape(), perm));
  Shape shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) shape[i] = x.shape()[sz(perm[i])];
  std::vector<double> out(map->size());
  const double* xp = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xp[(*map)[i]];
  return make_result(std::move(shape), std::move(out), {x}, [x, map](const TensorImpl& o) {
    if (double* gx = grad_target(x))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[(*map)[i]] += o.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const int nd = parts[0].ndim();
  if (axis < 0) axis += nd;
  Shape shape = parts[0].shape();
  shape[sz(axis)] = 0;
  for (const Tensor& p : parts) {
    require(p.ndim() == nd, "concat: rank mismatch");
    for (int d = 0; d < nd; ++d)
      if (d != axis) require(p.shape()[sz(d)] == parts[0].shape()[sz(d)], "concat: shape mismatch off the concat axis");
    shape[sz(axis)] += p.shape()[sz(axis)];
  }
  std::int64_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[sz(d)];
  std::vector<std::size_t> chunk(parts.size());
  std::size_t row = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    chunk[i] = sz(parts[i].numel() / outer);
    row += chunk[i];
  }
  std::vector<double> out(sz(outer) * row);
  for (std::int64_t o = 0; o < outer; ++o) {
    std::size_t off = sz(o) * row;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const double* src = parts[i].data() + sz(o) * chunk[i];
      std::copy(src, src + chunk[i], out.begin() + static_cast<std::ptrdiff_t>(off));
      off += chunk[i];
    }
  }
  return make_result(std::move(shape), std::move(out), parts, [parts, chunk, row, outer](const TensorImpl& o) {
    for (std::int64_t r = 0; r < outer; ++r) {
      std::size_t off = sz(r) * row;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (double* g = grad_target(parts[i])) {
          double* dst = g + sz(r) * chunk[i];
          for (std::size_t j = 0; j < chunk[i]; ++j) dst[j] += o.grad[off + j];
        }
        off += chunk[i];
      }
    }
  });
}

Tensor slice(const Tensor& x, int axis, int start, int length) {
  const int nd = x.ndim();
  if (axis < 0) axis += nd;
  require(start >= 0 && length >= 0 && start + length <= x.dim(axis), "slice: range out of bounds");
  std::int64_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= x.shape()[sz(d)];
  std::int64_t inner = 1;
  for (int d = axis + 1; d < nd; ++d) inner *= x.shape()[sz(d)];
  const std::size_t src_row = sz(x.dim(axis) * inner);
  const std::size_t dst_row = sz(length * inner);
  const std::size_t offset = sz(start * inner);
  Shape shape = x.shape();
  shape[sz(axis)] = length;
  std::vector<double> out(sz(outer) * dst_row);
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(x.data() + sz(o) * src_row + offset, dst_row, out.begin() + static_cast<std::ptrdiff_t>(sz(o) * dst_row));
  return make_result(std::move(shape), std::move(out), {x}, [=](const TensorImpl& o) {
    if (double* gx = grad_target(x))
      for (std::int64_t r = 0; r < outer; ++r)
        for (std::size_t j = 0; j < dst_row; ++j) gx[sz(r) * src_row + offset + j] += o.grad[sz(r) * dst_row + j];
  });
}

Tensor gather_tokens(const Tensor& x, const std::vector<int>& index, int m) {
  require(x.ndim() == 3, "gather_tokens: expects [B, N, D]");
  const int b = x.dim(0);
  const int n = x.dim(1);
  const std::size_t d = sz(x.dim(2));
  require(static_cast<std::int64_t>(index.size()) == static_cast<std::int64_t>(b) * m, "gather_tokens: index size mismatch");
  for (int i : index) require(i >= 0 && i < n, "gather_tokens: index out of range");
  std::vector<double> out(sz(static_cast<std::int64_t>(b) * m) * d);
  for (int bi = 0; bi < b; ++bi)
    for (int i = 0; i < m; ++i) {
      const double* src = x.data() + (sz(bi) * sz(n) + sz(index[sz(bi * m + i)])) * d;
      std::copy_n(src, d, out.begin() + static_cast<std::ptrdiff_t>((sz(bi) * sz(m) + sz(i)) * d));
    }
  return make_result({b, m, static_cast<int>(d)}, std::move(out), {x}, [=](const TensorImpl& o) {
    if (double* gx = grad_target(x))
      for (int bi = 0; bi < b; ++bi)
        for (int i = 0; i < m; ++i) {
          double* dst = gx + (sz(bi) * sz(n) + sz(index[sz(bi * m + i)])) * d;
          const double* src = o.grad.data() + (sz(bi) * sz(m) + sz(i)) * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
  });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({}, {s}, {x}, [x](const TensorImpl& o) {
    if (double* gx = grad_target(x))
      for (std::int64_t i = 0; i < x.numel(); ++i) gx[i] += o.grad[0];
  });
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_hw(const Tensor& x) {
  require(x.ndim() == 4, "mean_hw: expects NCHW");
  const int n = x.dim(0);
  const int c = x.dim(1);
  const std::size_t plane = sz(static_cast<std::int64_t>(x.dim(2)) * x.dim(3));
  std::vector<double> out(sz(static_cast<std::int64_t>(n) * c));
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    const double* p = x.data() + i * plane;
    for (std::size_t j = 0; j < plane; ++j) s += p[j];
    out[i] = s / static_cast<double>(plane);
  }
  return make_result({n, c}, std::move(out), {x}, [x, plane](const TensorImpl& o) {
    if (double* gx = grad_target(x))
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const double g = o.grad[i] / static_cast<double>(plane);
        for (std::size_t j = 0; j < plane; ++j) gx[i * plane + j] += g;
      }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  require(x.ndim() == 4 && weight.ndim() == 4, "conv2d: expects NCHW input and OIHW weight");
  const int n = x.dim(0);
  const int c = x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  const int o = weight.dim(0);
  const int k = weight.dim(2);
  require(weight.dim(1) == c && weight.dim(3) == k,
          "conv2d: weight " + shape_str(weight.shape()) + " does not match input " + shape_str(x.shape()));
  const int ho = (h + 2 * padding - k) / stride + 1;
  const int wo = (w + 2 * padding - k) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: input too small for kernel");
  const int ckk = c * k * k;
  const int plane_out = ho * wo;
  const bool direct = (k == 1 && stride == 1 && padding == 0);
  std::vector<double> out(sz(static_cast<std::int64_t>(n) * o * plane_out));
  std::vector<double> col(direct ? 0 : sz(static_cast<std::int64_t>(ckk) * plane_out));
  const std::size_t in_step = sz(static_cast<std::int64_t>(c) * h * w);
  const std::size_t out_step = sz(static_cast<std::int64_t>(o) * plane_out);
  for (int b = 0; b < n; ++b) {
    const double* xb = x.data() + sz(b) * in_step;
    const double* cp = xb;
    if (!direct) {
      im2col(xb, c, h, w, k, stride, padding, ho, wo, col.data());
      cp = col.data();
    }
    double* ob = out.data() + sz(b) * out_step;
    kernels::matmul(false, false, o, plane_out, ckk, weight.data(), cp, ob, false);
    if (bias.defined())
      for (int oc = 0; oc < o; ++oc)
        for (int p = 0; p < plane_out; ++p) ob[sz(oc) * sz(plane_out) + sz(p)] += bias.data()[oc];
  }
  return make_result({n, o, ho, wo}, std::move(out), {x, weight, bias}, [=](const TensorImpl& res) {
    double* gx = grad_target(x);
    double* gw = grad_target(weight);
    double* gb = grad_target(bias);
    std::vector<double> colb(direct ? 0 : sz(static_cast<std::int64_t>(ckk) * plane_out));
    std::vector<double> dcol(direct ? 0 : colb.size());
    for (int b = 0; b < n; ++b) {
      const double* dy = res.grad.data() + sz(b) * out_step;
      if (gb)
        for (int oc = 0; oc < o; ++oc)
          for (int p = 0; p < plane_out; ++p) gb[oc] += dy[sz(oc) * sz(plane_out) + sz(p)];
      const double* xb = x.data() + sz(b) * in_step;
      if (gw) {
        const double* cp = xb;
        if (!direct) {
          im2col(xb, c, h, w, k, stride, padding, ho, wo, colb.data());
          cp = colb.data();
        }
        kernels::matmul(false, true, o, ckk, plane_out, dy, cp, gw, true);
      }
      if (gx) {
        if (direct) {
          kernels::matmul(true, false, ckk, plane_out, o, weight.data(), dy, gx + sz(b) * in_step, true);
        } else {
          kernels::matmul(true, false, ckk, plane_out, o, weight.data(), dy, dcol.data(), false);
          col2im(dcol.data(), c, h, w, k, stride, padding, ho, wo, gx + sz(b) * in_step);
        }
      }
    }
  });
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  require(x.ndim() == 4, "resize_bilinear: expects NCHW");
  require(out_h > 0 && out_w > 0, "resize_bilinear: output size must be positive");
  const int planes = x.dim(0) * x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  auto ty = std::make_shared<std::vector<Lerp>>(lerp_table(h, out_h));
  auto tx = std::make_shared<std::vector<Lerp>>(lerp_table(w, out_w));
  std::vector<double> out(sz(static_cast<std::int64_t>(planes) * out_h * out_w));
  for (int p = 0; p < planes; ++p) {
    const double* src = x.data() + sz(static_cast<std::int64_t>(p) * h * w);
    double* dst = out.data() + sz(static_cast<std::int64_t>(p) * out_h * out_w);
    for (int oy = 0; oy < out_h; ++oy) {
      const Lerp& ly = (*ty)[sz(oy)];
      for (int ox = 0; ox < out_w; ++ox) {
        const Lerp& lx = (*tx)[sz(ox)];
        const double top = lx.w0 * src[ly.i0 * w + lx.i0] + lx.w1 * src[ly.i0 * w + lx.i1];
        const double bot = lx.w0 * src[ly.i1 * w + lx.i0] + lx.w1 * src[ly.i1 * w + lx.i1];
        dst[oy * out_w + ox] = ly.w0 * top + ly.w1 * bot;
      }
    }
  }
  Shape shape = {x.dim(0), x.dim(1), out_h, out_w};
  return make_result(std::move(shape), std::move(out), {x}, [=](const TensorImpl& o) {
    if (double* gx = grad_target(x))
      for (int p = 0; p < planes; ++p) {
        double* dst = gx + sz(static_cast<std::int64_t>(p) * h * w);
        const double* g = o.grad.data() + sz(static_cast<std::int64_t>(p) * out_h * out_w);
        for (int oy = 0; oy < out_h; ++oy) {
          const Lerp& ly = (*ty)[sz(oy)];
          for (int ox = 0; ox < out_w; ++ox) {
            const Lerp& lx = (*tx)[sz(ox)];
            const double gv = g[oy * out_w + ox];
            dst[ly.i0 * w + lx.i0] += ly.w0 * lx.w0 * gv;
            dst[ly.i0 * w + lx.i1] += ly.w0 * lx.w1 * gv;
            dst[ly.i1 * w + lx.i0] += ly.w1 * lx.w0 * gv;
            dst[ly.i1 * w + lx.i1] += ly.w1 * lx.w1 * gv;
          }
        }
      }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training) {
  require(x.ndim() >= 2, "batch_norm: expects at least [N, C]");
  const int n = x.dim(0);
  const int c = x.dim(1);
  const std::size_t inner = sz(x.numel() / (static_cast<std::int64_t>(n) * c));
  const std::size_t count = sz(n) * inner;
  require(state.running_mean.numel() == c, "batch_norm: channel count mismatch");
  auto xhat = std::make_shared<std::vector<double>>(sz(x.numel()));
  auto invstd = std::make_shared<std::vector<double>>(sz(c));
  std::vector<double> out(sz(x.numel()));
  const double* xp = x.data();
  auto at = [&](int b, int ch, std::size_t i) { return (sz(b) * sz(c) + sz(ch)) * inner + i; };
  for (int ch = 0; ch < c; ++ch) {
    double mean;
    double var;
    if (training) {
      double s = 0.0;
      for (int b = 0; b < n; ++b)
        for (std::size_t i = 0; i < inner; ++i) s += xp[at(b, ch, i)];
      mean = s / static_cast<double>(count);
      double q = 0.0;
      for (int b = 0; b < n; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const double dv = xp[at(b, ch, i)] - mean;
          q += dv * dv;
        }
      var = q / static_cast<double>(count);
      const double unbiased = count > 1 ? q / static_cast<double>(count - 1) : var;
      state.running_mean.data()[ch] = (1.0 - state.momentum) * state.running_mean.data()[ch] + state.momentum * mean;
      state.running_var.data()[ch] = (1.0 - state.momentum) * state.running_var.data()[ch] + state.momentum * unbiased;
    } else {
      mean = state.running_mean.data()[ch];
      var = state.running_var.data()[ch];
    }
    const double is = 1.0 / std::sqrt(var + state.eps);
    (*invstd)[sz(ch)] = is;
    const double g = gamma.defined() ? gamma.data()[ch] : 1.0;
    const double bt = beta.defined() ? beta.data()[ch] : 0.0;
    for (int b = 0; b < n; ++b)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t idx = at(b, ch, i);
        const double xh = (xp[idx] - mean) * is;
        (*xhat)[idx] = xh;
        out[idx] = g * xh + bt;
      }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta}, [=](const TensorImpl& o) {
    double* gx = grad_target(x);
    double* gg = grad_target(gamma);
    double* gbeta = grad_target(beta);
    auto at = [&](int b, int ch, std::size_t i) { return (sz(b) * sz(c) + sz(ch)) * inner + i; };
    for (int ch = 0; ch < c; ++ch) {
      const double g = gamma.defined() ? gamma.data()[ch] : 1.0;
      double sum_dy = 0.0;
      double sum_dy_xh = 0.0;
      for (int b = 0; b < n; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t idx = at(b, ch, i);
          sum_dy += o.grad[idx];
          sum_dy_xh += o.grad[idx] * (*xhat)[idx];
        }
      if (gg) gg[ch] += sum_dy_xh;
      if (gbeta) gbeta[ch] += sum_dy;
      if (!gx) continue;
      const double is = (*invstd)[sz(ch)];
      if (training) {
        const double m = static_cast<double>(count);
        for (int b = 0; b < n; ++b)
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t idx = at(b, ch, i);
            gx[idx] += g * is / m * (m * o.grad[idx] - sum_dy - (*xhat)[idx] * sum_dy_xh);
          }
      } else {
        for (int b = 0; b < n; ++b)
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t idx = at(b, ch, i);
            gx[idx] += g * is * o.grad[idx];
          }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = sz(x.dim(-1));
  const std::size_t rows = sz(x.numel()) / d;
  auto xhat = std::make_shared<std::vector<double>>(sz(x.numel()));
  auto invstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(sz(x.numel()));
  const double* xp = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xp + r * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += row[j];
    const double mean = s / static_cast<double>(d);
    double q = 0.0;
    for (std::size_t j = 0; j < d; ++j) q += (row[j] - mean) * (row[j] - mean);
    const double is = 1.0 / std::sqrt(q / static_cast<double>(d) + eps);
    (*invstd)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mean) * is;
      (*xhat)[r * d + j] = xh;
      out[r * d + j] = xh * gamma.data()[j] + beta.data()[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta}, [=](const TensorImpl& o) {
    double* gx = grad_target(x);
    double* gg = grad_target(gamma);
    double* gb = grad_target(beta);
    std::vector<double> dxh(d);
    for (std::size_t r = 0; r < rows; ++r) {
      double s1 = 0.0;
      double s2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double gy = o.grad[r * d + j];
        const double xh = (*xhat)[r * d + j];
        if (gg) gg[j] += gy * xh;
        if (gb) gb[j] += gy;
        dxh[j] = gy * gamma.data()[j];
        s1 += dxh[j];
        s2 += dxh[j] * xh;
      }
      if (!gx) continue;
      const double dd = static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j)
        gx[r * d + j] += (*invstd)[r] / dd * (dd * dxh[j] - s1 - (*xhat)[r * d + j] * s2);
    }
  });
}

Tensor patchify(const Tensor& x, int patch) {
  require(x.ndim() == 4, "patchify: expects NCHW");
  const int b = x.dim(0);
  const int c = x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  require(patch > 0 && h % patch == 0 && w % patch == 0,
          "image side must be divisible by the patch size " + std::to_string(patch));
  const int gh = h / patch;
  const int gw = w / patch;
  Tensor t = reshape(x, {b, c, gh, patch, gw, patch});
  t = permute(t, {0, 2, 4, 1, 3, 5});
  return reshape(t, {b, gh * gw, c * patch * patch});
}

}  // namespace sslbench::ops
