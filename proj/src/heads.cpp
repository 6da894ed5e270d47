#include "sslbench/heads.hpp"

#include <algorithm>
#include <cmath>

#include "sslbench/errors.hpp"

namespace sslbench {

namespace {
std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }
}  // namespace

Classifier::Classifier(int in, int classes, Rng& rng) : fc_(in, classes, rng) { register_module("fc", fc_); }

Tensor Classifier::forward(const Tensor& features) const {
  require(features.ndim() == 2 && features.dim(1) == fc_.weight.dim(0),
          "classifier expects [B, " + std::to_string(fc_.weight.dim(0)) + "] features, got " +
              shape_str(features.shape()));
  return fc_.forward(features);
}

void Classifier::zero_init() {
  std::fill(fc_.weight.values().begin(), fc_.weight.values().end(), 0.0);
  std::fill(fc_.bias.values().begin(), fc_.bias.values().end(), 0.0);
}

Bottleneck::Bottleneck(int channels, Rng& rng)
    : c1_(channels, std::max(1, channels / 4), 1, 1, 0, rng),
      b1_(std::max(1, channels / 4)),
      c2_(std::max(1, channels / 4), std::max(1, channels / 4), 3, 1, 1, rng),
      b2_(std::max(1, channels / 4)),
      c3_(std::max(1, channels / 4), channels, 1, 1, 0, rng),
      b3_(channels) {
  register_module("conv1", c1_);
  register_module("bn1", b1_);
  register_module("conv2", c2_);
  register_module("bn2", b2_);
  register_module("conv3", c3_);
  register_module("bn3", b3_);
}

Tensor Bottleneck::forward(const Tensor& x) {
  Tensor h = ops::relu(b1_.forward(c1_.forward(x)));
  h = ops::relu(b2_.forward(c2_.forward(h)));
  h = b3_.forward(c3_.forward(h));
  return ops::relu(ops::add(h, x));
}

FusionLevel::FusionLevel(int in, int skip, int blocks, Rng& rng)
    : reduce_(in, in / 2, 1, 1, 0, rng), norm_(in / 2), out_(in / 2 + skip) {
  require(in >= 2, "fusion level needs at least two input channels");
  register_module("reduce", reduce_);
  register_module("norm", norm_);
  for (int i = 0; i < blocks; ++i) {
    blocks_.push_back(std::make_unique<Bottleneck>(out_, rng));
    register_module("blocks." + std::to_string(i), *blocks_.back());
  }
}

Tensor FusionLevel::reduce(const Tensor& x) { return norm_.forward(reduce_.forward(x)); }

Tensor FusionLevel::forward(const Tensor& x, const Tensor& skip) {
  Tensor h = ops::resize_bilinear(reduce(x), skip.dim(2), skip.dim(3));
  h = ops::concat({h, skip}, 1);
  for (auto& b : blocks_) h = b->forward(h);
  return h;
}

namespace {
int fused_channels(const std::vector<int>& ch) {
  require(ch.size() == 4, "the fusion decoder needs a four-level pyramid");
  int c = ch[3];
  for (int i = 2; i >= 0; --i) c = c / 2 + ch[static_cast<std::size_t>(i)];
  return c;
}
}  // namespace

FusionDecoder::FusionDecoder(const std::vector<int>& ch, int blocks_per_level, Rng& rng)
    : head1_(fused_channels(ch), std::max(1, fused_channels(ch) / 2), 3, 1, 1, rng),
      head2_(std::max(1, fused_channels(ch) / 2), 8, 3, 1, 1, rng, true),
      head3_(8, 1, 1, 1, 0, rng, true) {
  int c = ch[3];
  for (int i = 2; i >= 0; --i) {
    levels_.push_back(std::make_unique<FusionLevel>(c, ch[static_cast<std::size_t>(i)], blocks_per_level, rng));
    register_module("level" + std::to_string(levels_.size()), *levels_.back());
    c = levels_.back()->out_channels();
  }
  register_module("head1", head1_);
  register_module("head2", head2_);
  register_module("head3", head3_);
}

Tensor FusionDecoder::forward(const std::vector<Tensor>& pyramid, int out_h, int out_w) {
  require(pyramid.size() == 4, "missing pyramid level: the decoder needs four maps, got " +
                                   std::to_string(pyramid.size()));
  Tensor h = pyramid[3];
  for (int i = 0; i < 3; ++i) h = levels_[static_cast<std::size_t>(i)]->forward(h, pyramid[static_cast<std::size_t>(2 - i)]);
  h = head1_.forward(h);
  h = ops::resize_bilinear(h, out_h, out_w);
  h = ops::relu(head2_.forward(h));
  return ops::sigmoid(head3_.forward(h));
}

void FusionDecoder::zero_init_output() {
  std::fill(head3_.weight.values().begin(), head3_.weight.values().end(), 0.0);
  std::fill(head3_.bias.values().begin(), head3_.bias.values().end(), 0.0);
}

TokenPyramid::TokenPyramid(int embed, const std::vector<int>& widths, Rng& rng) {
  require(widths.size() == 4, "the token pyramid needs four widths");
  for (std::size_t i = 0; i < 4; ++i) {
    proj_.push_back(std::make_unique<nn::Conv2d>(embed, widths[i], 1, 1, 0, rng, true));
    register_module("proj" + std::to_string(i), *proj_.back());
  }
}

std::vector<Tensor> TokenPyramid::forward(const std::vector<Tensor>& taps, int image_side) {
  require(taps.size() == 4, "the token pyramid needs four block taps, got " + std::to_string(taps.size()));
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < 4; ++i) {
    const int side = std::max(1, image_side >> (i + 1));
    out.push_back(ops::resize_bilinear(proj_[i]->forward(taps[i]), side, side));
  }
  return out;
}

TaskModel::TaskModel(std::unique_ptr<Encoder> encoder, TaskKind task, int classes, const HeadConfig& cfg, Rng& rng)
    : encoder_(std::move(encoder)), task_(task) {
  register_module("encoder", *encoder_);
  switch (task) {
    case TaskKind::classification:
      require(classes >= 2, "classification needs at least two classes");
      classifier_ = std::make_unique<Classifier>(encoder_->feature_dim(), classes, rng);
      register_module("classifier", *classifier_);
      break;
    case TaskKind::segmentation:
    case TaskKind::depth: {
      std::vector<int> channels;
      if (auto* conv = dynamic_cast<ConvEncoder*>(encoder_.get())) {
        channels = conv->config().widths;
        require(channels.size() == 4, "dense heads need a four-stage conv encoder");
      } else {
        auto& vit = dynamic_cast<ViTEncoder&>(*encoder_);
        require(vit.config().depth >= 4, "dense heads need a ViT with at least four blocks");
        adapter_ = std::make_unique<TokenPyramid>(vit.config().embed, cfg.dense_widths, rng);
        register_module("adapter", *adapter_);
        channels = cfg.dense_widths;
      }
      decoder_ = std::make_unique<FusionDecoder>(
          channels, task == TaskKind::depth ? cfg.depth_blocks : cfg.seg_blocks, rng);
      register_module("decoder", *decoder_);
      break;
    }
    default:
      throw ValidationError("detection fine-tuning is out of scope; score detection prediction files with `evaluate`");
  }
}

Tensor TaskModel::forward(const Tensor& x) {
  Features f = encoder_->forward(x);
  if (classifier_) return classifier_->forward(f.pooled);
  std::vector<Tensor> pyramid = adapter_ ? adapter_->forward(f.taps, x.dim(2)) : f.pyramid;
  return decoder_->forward(pyramid, x.dim(2), x.dim(3));
}

// ---------------------------------------------------------------------------

Tensor weighted_cross_entropy(const Tensor& logits, const std::vector<int>& labels, const std::vector<double>& weights) {
  require(logits.ndim() == 2, "cross entropy expects [B, C] logits");
  const int b = logits.dim(0);
  const int c = logits.dim(1);
  require(static_cast<int>(labels.size()) == b, "cross entropy: one label per row is required");
  require(weights.empty() || static_cast<int>(weights.size()) == c, "cross entropy: one weight per class is required");
  auto probs = std::make_shared<std::vector<double>>(sz(static_cast<std::int64_t>(b) * c));
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < b; ++i) {
    const int y = labels[sz(i)];
    require(y >= 0 && y < c, "invalid label " + std::to_string(y));
    const double* z = logits.data() + sz(static_cast<std::int64_t>(i) * c);
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += std::exp(z[j] - mx);
    const double lse = mx + std::log(s);
    for (int j = 0; j < c; ++j) (*probs)[sz(static_cast<std::int64_t>(i) * c + j)] = std::exp(z[j] - lse);
    const double w = weights.empty() ? 1.0 : weights[sz(y)];
    num += w * (lse - z[y]);
    den += w;
  }
  require(den > 0.0, "cross entropy: total weight is zero");
  return make_result({}, {num / den}, {logits}, [=](const TensorImpl& o) {
    if (double* g = grad_target(logits))
      for (int i = 0; i < b; ++i) {
        const int y = labels[sz(i)];
        const double w = (weights.empty() ? 1.0 : weights[sz(y)]) * o.grad[0] / den;
        for (int j = 0; j < c; ++j) {
          const std::size_t k = sz(static_cast<std::int64_t>(i) * c + j);
          g[k] += w * ((*probs)[k] - (j == y ? 1.0 : 0.0));
        }
      }
  });
}

Tensor dice_loss(const Tensor& pred, const Tensor& target, double eps) {
  require(pred.shape() == target.shape(), "dice loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                              shape_str(target.shape()));
  require(pred.ndim() >= 1, "dice loss: empty input");
  const int b = pred.dim(0);
  const std::size_t per = sz(pred.numel() / b);
  std::vector<double> inter(sz(b)), denom(sz(b));
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    double pt = 0.0, ps = 0.0, ts = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      const double p = pred.data()[sz(i) * per + j];
      const double t = target.data()[sz(i) * per + j];
      pt += p * t;
      ps += p;
      ts += t;
    }
    inter[sz(i)] = 2.0 * pt + eps;
    denom[sz(i)] = ps + ts + eps;
    total += 1.0 - inter[sz(i)] / denom[sz(i)];
  }
  return make_result({}, {total / b}, {pred}, [=](const TensorImpl& o) {
    if (double* g = grad_target(pred))
      for (int i = 0; i < b; ++i) {
        const double d = denom[sz(i)];
        for (std::size_t j = 0; j < per; ++j) {
          const double t = target.data()[sz(i) * per + j];
          g[sz(i) * per + j] += o.grad[0] / b * -(2.0 * t * d - inter[sz(i)]) / (d * d);
        }
      }
  });
}

namespace {

struct AlignStats {
  double n = 0, mx = 0, my = 0, vxx = 0, cxy = 0;
};

AlignStats align_stats(std::span<const double> x, std::span<const double> y, std::span<const double> lens) {
  AlignStats a;
  for (std::size_t j = 0; j < x.size(); ++j)
    if (lens[j] > 0.5) {
      a.n += 1;
      a.mx += x[j];
      a.my += y[j];
    }
  require(a.n >= 1, "lens mask covers no pixels");
  a.mx /= a.n;
  a.my /= a.n;
  for (std::size_t j = 0; j < x.size(); ++j)
    if (lens[j] > 0.5) {
      a.vxx += (x[j] - a.mx) * (x[j] - a.mx);
      a.cxy += (x[j] - a.mx) * (y[j] - a.my);
    }
  return a;
}

bool is_degenerate(const AlignStats& a) {
  return a.n < 2 || !(a.vxx > 1e-12 * std::max(1.0, a.n * a.mx * a.mx));
}

}  // namespace

AlignmentSolution ssi_align(std::span<const double> pred, std::span<const double> target, std::span<const double> lens) {
  require(pred.size() == target.size() && pred.size() == lens.size(), "ssi_align: size mismatch");
  const AlignStats a = align_stats(pred, target, lens);
  if (is_degenerate(a)) return {0.0, a.my, true};
  const double s = a.cxy / a.vxx;
  return {s, a.my - s * a.mx, false};
}

double ssi_mse_value(std::span<const double> pred, std::span<const double> target, std::span<const double> lens) {
  const AlignmentSolution al = ssi_align(pred, target, lens);
  double sum = 0.0;
  double n = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j)
    if (lens[j] > 0.5) {
      const double r = al.s * pred[j] + al.t - target[j];
      sum += r * r;
      n += 1.0;
    }
  return sum / n;
}

Tensor ssi_mse_loss(const Tensor& pred, const Tensor& target, const Tensor& lens, const SsiOptions& opt,
                    int* degenerate) {
  require(pred.ndim() == 4 && pred.dim(1) == 1, "ssi loss expects [B, 1, H, W] predictions");
  require(pred.shape() == target.shape() && pred.shape() == lens.shape(), "ssi loss: shape mismatch");
  require(opt.scales >= 1 && opt.grad_weight >= 0.0, "ssi loss: invalid gradient-term settings");
  const int b = pred.dim(0);
  const int h = pred.dim(2);
  const int w = pred.dim(3);
  const std::size_t plane = sz(static_cast<std::int64_t>(h) * w);
  // dL/dpred accumulated during the forward pass: the backward closure only
  // rescales it by the incoming gradient.
  auto dpred = std::make_shared<std::vector<double>>(sz(pred.numel()), 0.0);
  double total = 0.0;
  int n_degenerate = 0;
  for (int i = 0; i < b; ++i) {
    std::span<const double> x(pred.data() + sz(i) * plane, plane);
    std::span<const double> y(target.data() + sz(i) * plane, plane);
    std::span<const double> m(lens.data() + sz(i) * plane, plane);
    const AlignStats st = align_stats(x, y, m);
    const bool degen = is_degenerate(st);
    n_degenerate += degen ? 1 : 0;
    const double s = degen ? 0.0 : st.cxy / st.vxx;
    const double t = degen ? st.my : st.my - s * st.mx;
    std::vector<double> r(plane, 0.0), g(plane, 0.0);
    double mse = 0.0;
    for (std::size_t j = 0; j < plane; ++j)
      if (m[j] > 0.5) {
        r[j] = s * x[j] + t - y[j];
        mse += r[j] * r[j];
        g[j] = 2.0 * r[j] / st.n;
      }
    mse /= st.n;
    double grad_term = 0.0;
    int used = 0;
    std::vector<double> gg(plane, 0.0);
    for (int k = 0; k < opt.scales; ++k) {
      const int step = 1 << k;
      double count = 0.0;
      for (int yy = 0; yy < h; yy += step)
        for (int xx = 0; xx < w; xx += step)
          if (m[sz(yy * w + xx)] > 0.5) count += 1.0;
      if (count == 0.0) continue;
      ++used;
      double acc = 0.0;
      std::vector<double> gk(plane, 0.0);
      for (int yy = 0; yy < h; yy += step)
        for (int xx = 0; xx < w; xx += step) {
          const std::size_t p = sz(yy * w + xx);
          if (m[p] <= 0.5) continue;
          if (xx + step < w && m[p + sz(step)] > 0.5) {
            const double dv = r[p + sz(step)] - r[p];
            acc += std::abs(dv);
            const double sg = dv > 0.0 ? 1.0 : dv < 0.0 ? -1.0 : 0.0;
            gk[p + sz(step)] += sg / count;
            gk[p] -= sg / count;
          }
          if (yy + step < h && m[p + sz(step * w)] > 0.5) {
            const double dv = r[p + sz(step * w)] - r[p];
            acc += std::abs(dv);
            const double sg = dv > 0.0 ? 1.0 : dv < 0.0 ? -1.0 : 0.0;
            gk[p + sz(step * w)] += sg / count;
            gk[p] -= sg / count;
          }
        }
      grad_term += acc / count;
      for (std::size_t j = 0; j < plane; ++j) gg[j] += gk[j];
    }
    if (used > 0) {
      grad_term /= used;
      for (std::size_t j = 0; j < plane; ++j) g[j] += opt.grad_weight * gg[j] / used;
    }
    total += mse + opt.grad_weight * grad_term;
    if (degen) continue;  // the fallback residual does not depend on pred
    // Chain through the closed-form alignment.
    double sum_gx = 0.0, sum_g = 0.0;
    for (std::size_t j = 0; j < plane; ++j)
      if (m[j] > 0.5) {
        sum_gx += g[j] * x[j];
        sum_g += g[j];
      }
    double* dp = dpred->data() + sz(i) * plane;
    for (std::size_t j = 0; j < plane; ++j) {
      if (m[j] <= 0.5) continue;
      const double ds = ((y[j] - st.my) - 2.0 * s * (x[j] - st.mx)) / st.vxx;
      const double dt = -ds * st.mx - s / st.n;
      dp[j] = (s * g[j] + sum_gx * ds + sum_g * dt) / b;
    }
  }
  if (degenerate) *degenerate = n_degenerate;
  return make_result({}, {total / b}, {pred}, [pred, dpred](const TensorImpl& o) {
    if (double* g = grad_target(pred))
      for (std::size_t j = 0; j < dpred->size(); ++j) g[j] += o.grad[0] * (*dpred)[j];
  });
}

}  // namespace sslbench
