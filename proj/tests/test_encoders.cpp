#include <cmath>

#include "doctest.h"
#include "sslbench/encoders.hpp"
#include "sslbench/errors.hpp"
#include "sslbench/optim.hpp"
#include "support.hpp"

using namespace sslbench;
using testing::random_tensor;

namespace {

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (a.at(i) != b.at(i)) return false;
  return true;
}

}  // namespace

TEST_SUITE("encoders") {
  TEST_CASE("conv encoder pyramid shapes") {
    Rng rng(1);
    ConvEncoder enc(ConvEncoderConfig{}, rng);
    enc.eval();
    Tensor x = random_tensor({2, 3, 64, 64}, rng);
    const Features f = enc.forward(x);
    REQUIRE(f.pyramid.size() == 4);
    CHECK(f.pyramid[0].shape() == Shape{2, 16, 32, 32});
    CHECK(f.pyramid[3].shape() == Shape{2, 128, 4, 4});
    CHECK(f.pooled.shape() == Shape{2, 128});
    CHECK(enc.feature_dim() == 128);
    CHECK(same_values(enc.forward(x).pooled, f.pooled));
    CHECK_THROWS_AS(enc.forward(random_tensor({1, 3, 40, 40}, rng)), ValidationError);
  }

  TEST_CASE("zero input with zeroed affine shifts pools to zero") {
    Rng rng(2);
    ConvEncoder enc(ConvEncoderConfig{8, {8, 16}, 1}, rng);
    for (auto& p : enc.parameters())
      if (p.name.ends_with("beta"))
        for (double& v : p.tensor.values()) v = 0.0;
    enc.eval();
    const Features f = enc.forward(Tensor::zeros({1, 3, 16, 16}));
    for (double v : f.pooled.values()) CHECK(v == 0.0);
  }

  TEST_CASE("vit token layout") {
    Rng rng(3);
    ViTConfig cfg;
    cfg.image = 64;
    cfg.patch = 8;
    cfg.embed = 16;
    cfg.depth = 4;
    cfg.heads = 2;
    ViTEncoder enc(cfg, rng);
    CHECK(enc.grid() == 8);
    CHECK(enc.pos_embed.shape() == Shape{65, 16});
    Tensor x = random_tensor({2, 3, 64, 64}, rng);
    const Features f = enc.forward(x);
    CHECK(f.pooled.shape() == Shape{2, 16});
    REQUIRE(f.taps.size() == 4);
    CHECK(f.taps[0].shape() == Shape{2, 16, 8, 8});
    Tensor tokens = random_tensor({2, 64, 16}, rng);
    CHECK(prepend_token(tokens, enc.cls_token).shape() == Shape{2, 65, 16});
    cfg.image = 60;
    CHECK_THROWS_AS(ViTEncoder(cfg, rng), ValidationError);
  }

  TEST_CASE("full-grid window equals global attention") {
    Rng rng(4);
    ViTConfig cfg;
    cfg.image = 32;
    cfg.patch = 8;
    cfg.embed = 16;
    cfg.heads = 2;
    ViTEncoder enc(cfg, rng);
    Tensor x = random_tensor({1, 3, 32, 32}, rng);
    enc.set_block_windows({0, 0, 0, 0});
    const Tensor global = enc.forward(x).pooled;
    enc.set_block_windows({4, 4, 4, 4});
    CHECK(same_values(enc.forward(x).pooled, global));
    CHECK_THROWS_AS(window_mask(4, 3), ValidationError);
    CHECK(window_layout(12, 2) == std::vector<int>{2, 2, 0, 2, 2, 0, 2, 2, 0, 2, 2, 0});
  }

  TEST_CASE("window attention is block diagonal over patch tokens") {
    Rng rng(5);
    const int grid = 16, window = 4, dim = 8;
    Attention attn(dim, 2, rng);
    const Tensor mask = window_mask(grid, window);
    Tensor x = random_tensor({1, 1 + grid * grid, dim}, rng);
    Tensor y0 = attn.forward(x, mask);
    // Zero every token of window 0 (grid rows 0-3, columns 0-3).
    Tensor x2 = x.clone();
    auto in_window0 = [&](int t) { return (t / grid) < window && (t % grid) < window; };
    for (int t = 0; t < grid * grid; ++t)
      if (in_window0(t))
        for (int d = 0; d < dim; ++d) x2.data()[(1 + t) * dim + d] = 0.0;
    Tensor y1 = attn.forward(x2, mask);
    int changed = 0;
    for (int t = 0; t < grid * grid; ++t) {
      bool same = true;
      for (int d = 0; d < dim; ++d) same = same && y0.at((1 + t) * dim + d) == y1.at((1 + t) * dim + d);
      if (in_window0(t))
        changed += !same;
      else
        CHECK(same);
    }
    CHECK(changed == window * window);
  }

  TEST_CASE("ema update rule") {
    Rng rng(6);
    nn::Linear online(3, 2, rng), shadow(3, 2, rng);
    for (auto& p : online.parameters()) std::fill(p.tensor.values().begin(), p.tensor.values().end(), 1.0);
    for (auto& p : shadow.parameters()) std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0);
    ema_update(online.parameters(), shadow.parameters(), 0.9);
    for (auto& p : shadow.parameters())
      for (double v : p.tensor.values()) CHECK(v == doctest::Approx(0.1).epsilon(1e-15));
    ema_update(online.parameters(), shadow.parameters(), 1.0);
    for (auto& p : shadow.parameters())
      for (double v : p.tensor.values()) CHECK(v == doctest::Approx(0.1).epsilon(1e-15));
    ema_update(online.parameters(), shadow.parameters(), 0.0);
    for (auto& p : shadow.parameters())
      for (double v : p.tensor.values()) CHECK(v == 1.0);

    nn::Linear a(4, 3, rng), b(4, 3, rng);
    EmaShadow ema(a, b, 0.7);
    auto pa = a.parameters(), pb = b.parameters();
    std::vector<std::vector<double>> before;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(same_values(pa[i].tensor, pb[i].tensor));
      before.emplace_back(pb[i].tensor.values().begin(), pb[i].tensor.values().end());
      for (double& v : pa[i].tensor.values()) v += rng.uniform(-1, 1);
    }
    ema.update();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK_FALSE(pb[i].tensor.requires_grad());
      for (std::int64_t j = 0; j < pa[i].tensor.numel(); ++j)
        CHECK(pb[i].tensor.at(j) == doctest::Approx(0.7 * before[i][j] + 0.3 * pa[i].tensor.at(j)).epsilon(1e-14));
    }
    nn::Linear wrong(5, 3, rng);
    CHECK_THROWS(ema_update(a.parameters(), wrong.parameters(), 0.5));
  }

  TEST_CASE("position embedding interpolation") {
    Rng rng(7);
    Tensor pos = random_tensor({1 + 64, 4}, rng);
    CHECK(same_values(interpolate_pos_embed(pos, 8), pos));
    Tensor c = Tensor::full({1 + 64, 2}, 0.25);
    const Tensor big = interpolate_pos_embed(c, 16);
    for (double v : big.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    // 2x2 ramp along x: values 0, 1 per row.
    Tensor ramp = Tensor::from({5, 1}, {9.0, 0.0, 1.0, 0.0, 1.0});
    Tensor r = interpolate_pos_embed(ramp, 3);
    REQUIRE(r.shape() == Shape{10, 1});
    CHECK(r.at(0) == 9.0);
    for (int y = 0; y < 3; ++y) {
      CHECK(r.at(1 + y * 3 + 0) == doctest::Approx(0.0));
      CHECK(r.at(1 + y * 3 + 1) == doctest::Approx(0.5));
      CHECK(r.at(1 + y * 3 + 2) == doctest::Approx(1.0));
    }
    CHECK_THROWS_AS(interpolate_pos_embed(Tensor::zeros({1 + 6, 2}), 4), ValidationError);
  }

  TEST_CASE("frozen patch embedding is untouched by optimizer steps") {
    Rng rng(8);
    ViTConfig cfg;
    cfg.image = 16;
    cfg.patch = 8;
    cfg.embed = 8;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.frozen_patch_embed = true;
    ViTEncoder enc(cfg, rng);
    std::vector<std::vector<double>> init;
    for (auto& p : enc.patch_embed_parameters()) init.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    auto run_steps = [&] {
      AdamW opt(enc.parameters(), {1e-2, 0.9, 0.999, 1e-8, 1e-4});
      for (int s = 0; s < 3; ++s) {
        opt.zero_grad();
        Tensor loss = ops::sum_all(ops::mul(enc.forward(random_tensor({2, 3, 16, 16}, rng)).pooled,
                                            Tensor::full({2, 8}, 1.0)));
        loss.backward();
        opt.step();
      }
    };
    run_steps();
    auto pe = enc.patch_embed_parameters();
    for (std::size_t i = 0; i < pe.size(); ++i)
      CHECK(std::vector<double>(pe[i].tensor.values().begin(), pe[i].tensor.values().end()) == init[i]);
    enc.set_patch_embed_frozen(false);
    run_steps();
    pe = enc.patch_embed_parameters();
    CHECK(std::vector<double>(pe[0].tensor.values().begin(), pe[0].tensor.values().end()) != init[0]);
  }

  TEST_CASE("encoder descriptions round trip") {
    EncoderConfig c;
    c.arch = "vit";
    c.vit.image = 32;
    c.vit.embed = 16;
    c.vit.heads = 2;
    Rng rng(9);
    auto enc = make_encoder(c, rng);
    const EncoderConfig back = encoder_config_from_json(enc->describe());
    CHECK(back.arch == "vit");
    CHECK(back.vit.embed == 16);
    CHECK(back.vit.image == 32);
  }
}
