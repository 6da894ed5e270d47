#include <cmath>

#include "doctest.h"
#include "sslbench/errors.hpp"
#include "sslbench/heads.hpp"
#include "support.hpp"

using namespace sslbench;
using testing::random_tensor;

namespace {

std::unique_ptr<Encoder> small_conv(Rng& rng) {
  EncoderConfig c;
  c.conv = {8, {8, 16, 32, 64}, 1};
  return make_encoder(c, rng);
}

std::unique_ptr<Encoder> small_vit(Rng& rng) {
  EncoderConfig c;
  c.arch = "vit";
  c.vit.image = 32;
  c.vit.patch = 8;
  c.vit.embed = 16;
  c.vit.heads = 2;
  return make_encoder(c, rng);
}

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_SUITE("task_heads") {
  TEST_CASE("classifier head") {
    Rng rng(1);
    Classifier head(128, 6, rng);
    Tensor logits = head.forward(random_tensor({2, 128}, rng));
    CHECK(logits.shape() == Shape{2, 6});
    head.zero_init();
    Tensor p = ops::softmax_lastdim(head.forward(Tensor::zeros({1, 128})));
    for (double v : p.values()) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    Tensor z = random_tensor({1, 6}, rng);
    Tensor a = ops::softmax_lastdim(z), b = ops::softmax_lastdim(ops::add_scalar(z, 123.0));
    for (int i = 0; i < 6; ++i) CHECK(std::abs(a.at(i) - b.at(i)) < 1e-7);
    CHECK_THROWS(head.forward(Tensor::zeros({1, 64})));
  }

  TEST_CASE("weighted cross entropy") {
    Tensor even = Tensor::from({1, 2}, {0.3, 0.3});
    CHECK(weighted_cross_entropy(even, {0}, {1.0, 1.0}).item() == doctest::Approx(std::log(2.0)));
    CHECK(weighted_cross_entropy(Tensor::from({1, 2}, {60.0, -60.0}), {0}, {1.0, 1.0}).item() < 1e-20);
    // Single sample: the weight cancels in the normalization; in a batch it reweights.
    Tensor two = Tensor::from({2, 2}, {0.0, 1.0, 2.0, -1.0});
    const double l0 = weighted_cross_entropy(ops::slice(two, 0, 0, 1), {0}, {1.0, 1.0}).item();
    const double l1 = weighted_cross_entropy(ops::slice(two, 0, 1, 1), {1}, {1.0, 1.0}).item();
    CHECK(weighted_cross_entropy(two, {0, 1}, {2.0, 1.0}).item() == doctest::Approx((2 * l0 + l1) / 3.0));
    CHECK(weighted_cross_entropy(two, {0, 1}, {1.0, 1.0}).item() == doctest::Approx((l0 + l1) / 2.0).epsilon(1e-12));
    Rng rng(2);
    Tensor z = random_tensor({5, 4}, rng, -3, 3);
    const std::vector<int> y{0, 3, 2, 2, 1};
    double plain = 0;
    for (int b = 0; b < 5; ++b) {
      double lse = 0;
      for (int c = 0; c < 4; ++c) lse += std::exp(z.at(b * 4 + c));
      plain += std::log(lse) - z.at(b * 4 + y[b]);
    }
    CHECK(std::abs(weighted_cross_entropy(z, y, {1, 1, 1, 1}).item() - plain / 5.0) < 1e-7);
    CHECK_THROWS_AS(weighted_cross_entropy(z, {0, 4, 0, 0, 0}, {1, 1, 1, 1}), ValidationError);
  }

  TEST_CASE("dice loss") {
    const int n = 16;
    Tensor t = Tensor::zeros({1, 1, 4, 4});
    for (int i = 0; i < n / 2; ++i) t.data()[i] = 1.0;
    CHECK(dice_loss(t, t).item() == 0.0);
    Tensor inv = ops::add_scalar(ops::scale(t, -1.0), 1.0);
    CHECK(dice_loss(inv, t).item() == doctest::Approx(1.0 - 1.0 / (n + 1.0)));
    const double h = n / 2.0;
    CHECK(dice_loss(Tensor::full({1, 1, 4, 4}, 1.0), t).item() == doctest::Approx(1.0 - (2 * h + 1) / (3 * h + 1)));
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor tgt = Tensor::zeros({2, 1, 3, 3});
      for (double& x : tgt.values()) x = rng.bernoulli(0.4);
      const double v = dice_loss(random_tensor({2, 1, 3, 3}, rng, 0, 1), tgt).item();
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(dice_loss(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 2, 3})), ValidationError);
  }

  TEST_CASE("dense heads on the conv path") {
    Rng rng(4);
    TaskModel seg(small_conv(rng), TaskKind::segmentation, 1, HeadConfig{}, rng);
    seg.decoder()->zero_init_output();
    seg.eval();
    Tensor x = random_tensor({2, 3, 32, 32}, rng);
    Tensor p = seg.forward(x);
    CHECK(p.shape() == Shape{2, 1, 32, 32});
    for (double v : p.values()) CHECK(v == 0.5);
    CHECK(vals(seg.forward(x)) == vals(p));

    TaskModel depth(small_conv(rng), TaskKind::depth, 1, HeadConfig{}, rng);
    Tensor d = depth.forward(x);
    CHECK(d.shape() == Shape{2, 1, 32, 32});
    for (double v : d.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    FusionLevel level(128, 64, 1, rng);
    CHECK(level.reduce(random_tensor({1, 128, 2, 2}, rng)).dim(1) == 64);
    CHECK_THROWS_AS(TaskModel(small_conv(rng), TaskKind::detection, 1, HeadConfig{}, rng), ValidationError);
  }

  TEST_CASE("dense heads on the token path") {
    Rng rng(5);
    TaskModel depth(small_vit(rng), TaskKind::depth, 1, HeadConfig{}, rng);
    Tensor d = depth.forward(random_tensor({1, 3, 32, 32}, rng));
    CHECK(d.shape() == Shape{1, 1, 32, 32});
    TaskModel cls(small_vit(rng), TaskKind::classification, 4, HeadConfig{}, rng);
    CHECK(cls.forward(random_tensor({3, 3, 32, 32}, rng)).shape() == Shape{3, 4});
  }

  TEST_CASE("least-squares alignment") {
    const std::vector<double> y{0.1, 0.4, 0.7, 0.2}, ones(4, 1.0);
    std::vector<double> yhat;
    for (double v : y) yhat.push_back(2 * v + 3);
    const auto a = ssi_align(yhat, y, ones);
    CHECK(std::abs(a.s - 0.5) < 1e-9);
    CHECK(std::abs(a.t + 1.5) < 1e-9);
    const auto b = ssi_align(std::vector<double>{0, 1}, std::vector<double>{1, 2}, std::vector<double>{1, 1});
    CHECK(b.s == doctest::Approx(1.0));
    CHECK(b.t == doctest::Approx(1.0));
    const auto c = ssi_align(y, y, ones);
    CHECK(c.s == doctest::Approx(1.0));
    CHECK(std::abs(c.t) < 1e-12);
    const auto deg = ssi_align(std::vector<double>{0.3, 0.3, 0.3}, std::vector<double>{0.1, 0.2, 0.6},
                               std::vector<double>{1, 1, 1});
    CHECK(deg.degenerate);
    CHECK(deg.s == 0.0);
    CHECK(deg.t == doctest::Approx(0.3));
  }

  TEST_CASE("alignment residual satisfies the normal equations") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
      const auto p = testing::random_values(30, rng, -2, 2), y = testing::random_values(30, rng, 0, 1);
      std::vector<double> lens(30);
      for (double& l : lens) l = rng.bernoulli(0.7);
      const auto a = ssi_align(p, y, lens);
      const auto [s, t] = oracle::affine_fit(p, y, lens);
      CHECK(a.s == doctest::Approx(s).epsilon(1e-9));
      CHECK(a.t == doctest::Approx(t).epsilon(1e-9));
      double r1 = 0, rp = 0, scale = 0;
      for (int j = 0; j < 30; ++j) {
        if (lens[j] < 0.5) continue;
        const double r = a.s * p[j] + a.t - y[j];
        r1 += r;
        rp += r * p[j];
        scale += std::abs(y[j] * p[j]);
      }
      CHECK(std::abs(r1) < 1e-5 * scale);
      CHECK(std::abs(rp) < 1e-5 * scale);
    }
  }

  TEST_CASE("ssi loss is invariant to affine reparametrization") {
    Rng rng(7);
    SsiOptions opt;
    for (int trial = 0; trial < 20; ++trial) {
      Tensor y = random_tensor({2, 1, 8, 8}, rng, 0, 1), p = random_tensor({2, 1, 8, 8}, rng, 0, 1);
      Tensor lens = Tensor::zeros({2, 1, 8, 8});
      for (double& v : lens.values()) v = rng.bernoulli(0.8);
      const double base = ssi_mse_loss(p, y, lens, opt).item();
      const double a = rng.bernoulli(0.5) ? rng.uniform(0.1, 5) : -rng.uniform(0.1, 5);
      const double b = rng.uniform(-3, 3);
      CHECK(std::abs(ssi_mse_loss(ops::add_scalar(ops::scale(p, a), b), y, lens, opt).item() - base) < 1e-8);
      CHECK(std::abs(ssi_mse_loss(ops::add_scalar(ops::scale(y, 3.0), -1.0), y, lens, opt).item()) < 1e-12);
      // Aligned error never exceeds the raw error of an unaligned guess.
      Tensor noisy = ops::add(y, random_tensor({2, 1, 8, 8}, rng, -0.1, 0.1));
      SsiOptions mse_only{0.0, 1};
      double raw = 0;
      for (int b2 = 0; b2 < 2; ++b2) {
        double s = 0, n = 0;
        for (int i = 0; i < 64; ++i) {
          const int k = b2 * 64 + i;
          if (lens.at(k) < 0.5) continue;
          s += (noisy.at(k) - y.at(k)) * (noisy.at(k) - y.at(k));
          n += 1;
        }
        raw += s / n / 2;
      }
      CHECK(ssi_mse_loss(noisy, y, lens, mse_only).item() <= raw + 1e-15);
    }
  }

  TEST_CASE("gradient checks of the fine-tuning losses") {
    Rng rng(8);
    const std::vector<int> labels{2, 0, 1, 2};
    const std::vector<double> weights{0.5, 2.0, 1.25};
    CHECK(testing::gradient_error([&](const Tensor& z) { return weighted_cross_entropy(z, labels, weights); },
                                  random_tensor({4, 3}, rng, -2, 2)) < 1e-4);
    Tensor target = Tensor::zeros({2, 1, 4, 4});
    for (double& v : target.values()) v = rng.bernoulli(0.5);
    CHECK(testing::gradient_error([&](const Tensor& p) { return dice_loss(p, target); },
                                  random_tensor({2, 1, 4, 4}, rng, 0.05, 0.95)) < 1e-4);
    Tensor y = random_tensor({2, 1, 4, 4}, rng, 0, 1);
    Tensor lens = Tensor::full({2, 1, 4, 4}, 1.0);
    lens.data()[0] = 0.0;
    lens.data()[21] = 0.0;
    CHECK(testing::gradient_error([&](const Tensor& p) { return ssi_mse_loss(p, y, lens, SsiOptions{}); },
                                  random_tensor({2, 1, 4, 4}, rng, 0, 1)) < 1e-4);
    CHECK(testing::gradient_error([&](const Tensor& p) { return ssi_mse_loss(p, y, lens, SsiOptions{0.0, 1}); },
                                  random_tensor({2, 1, 4, 4}, rng, 0, 1)) < 1e-4);
  }

  TEST_CASE("degenerate images are counted and get no gradient") {
    Tensor y = Tensor::from({1, 1, 2, 2}, {0.1, 0.5, 0.2, 0.9});
    Tensor lens = Tensor::full({1, 1, 2, 2}, 1.0);
    Tensor p = Tensor::full({1, 1, 2, 2}, 0.4);
    p.set_requires_grad(true);
    int degenerate = 0;
    Tensor loss = ssi_mse_loss(p, y, lens, SsiOptions{}, &degenerate);
    CHECK(degenerate == 1);
    CHECK(std::isfinite(loss.item()));
    loss.backward();
    for (double g : p.grad()) CHECK(g == 0.0);
  }
}
