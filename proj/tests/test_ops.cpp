#include <cmath>

#include "doctest.h"
#include "sslbench/kernels.hpp"
#include "sslbench/ops.hpp"
#include "support.hpp"

using namespace sslbench;
using testing::gradient_error;
using testing::random_tensor;

namespace {

// Scalar probe: sum(f(x) * w) for a fixed random w.
std::function<Tensor(const Tensor&)> probe(std::function<Tensor(const Tensor&)> f, const Tensor& x, Rng& rng) {
  Tensor y;
  {
    NoGradGuard g;
    y = f(x);
  }
  Tensor w = random_tensor(y.shape(), rng);
  return [f, w](const Tensor& t) { return ops::sum_all(ops::mul(f(t), w)); };
}

}  // namespace

TEST_SUITE("ops") {
  TEST_CASE("elementwise and activation gradients") {
    Rng rng(10);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    CHECK(gradient_error(probe([&](const Tensor& t) { return ops::add(t, b); }, x, rng), x) < 1e-7);
    CHECK(gradient_error(probe([&](const Tensor& t) { return ops::mul(t, t); }, x, rng), x) < 1e-7);
    CHECK(gradient_error(probe([&](const Tensor& t) { return ops::sub(ops::reshape(b, {1, 4}), ops::slice(t, 0, 1, 1)); }, x, rng), x) < 1e-7);
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::gelu(t); }, x, rng), x) < 1e-7);
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::sigmoid(t); }, x, rng), x) < 1e-7);
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::softmax_lastdim(t); }, x, rng), x) < 1e-7);
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::scale(ops::add_scalar(t, 2.0), -3.0); }, x, rng), x) <
          1e-7);
  }

  TEST_CASE("linear algebra gradients") {
    Rng rng(11);
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor w = random_tensor({4, 5}, rng);
    Tensor bias = random_tensor({5}, rng);
    CHECK(gradient_error(probe([&](const Tensor& t) { return ops::linear(t, w, bias); }, x, rng), x) < 1e-7);
    CHECK(gradient_error(probe([&](const Tensor& t) { return ops::linear(x, t, bias); }, w, rng), w) < 1e-7);
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        if (ta && tb) continue;
        Tensor a = ta ? random_tensor({2, 4, 3}, rng) : random_tensor({2, 3, 4}, rng);
        Tensor bb = tb ? random_tensor({2, 5, 4}, rng) : random_tensor({2, 4, 5}, rng);
        CHECK(gradient_error(probe([&](const Tensor& t) { return ops::bmm(t, bb, ta, tb); }, a, rng), a) < 1e-7);
        CHECK(gradient_error(probe([&](const Tensor& t) { return ops::bmm(a, t, ta, tb); }, bb, rng), bb) < 1e-7);
      }
  }

  TEST_CASE("shape op gradients") {
    Rng rng(12);
    Tensor x = random_tensor({2, 3, 4}, rng);
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::permute(t, {2, 0, 1}); }, x, rng), x) < 1e-7);
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::reshape(t, {6, 4}); }, x, rng), x) < 1e-7);
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::concat({t, ops::scale(t, 2.0)}, 1); }, x, rng), x) <
          1e-7);
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::gather_tokens(t, {2, 0, 1, 1}, 2); }, x, rng), x) <
          1e-7);
    Tensor img = random_tensor({1, 2, 4, 4}, rng);
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::patchify(t, 2); }, img, rng), img) < 1e-7);
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::mean_hw(t); }, img, rng), img) < 1e-7);
  }

  TEST_CASE("convolution, resize and normalization gradients") {
    Rng rng(13);
    Tensor x = random_tensor({2, 2, 5, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    for (int stride : {1, 2}) {
      CHECK(gradient_error(probe([&](const Tensor& t) { return ops::conv2d(t, w, b, stride, 1); }, x, rng), x) < 1e-7);
      CHECK(gradient_error(probe([&](const Tensor& t) { return ops::conv2d(x, t, b, stride, 1); }, w, rng), w) < 1e-7);
    }
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::resize_bilinear(t, 8, 3); }, x, rng), x) < 1e-7);
    CHECK(gradient_error(probe([](const Tensor& t) { return ops::resize_bilinear(t, 2, 2); }, x, rng), x) < 1e-7);
    Tensor g = random_tensor({2}, rng, 0.5, 1.5), be = random_tensor({2}, rng);
    ops::BatchNormState st{Tensor::zeros({2}), Tensor::full({2}, 1.0)};
    CHECK(gradient_error(probe([&](const Tensor& t) { return ops::batch_norm(t, g, be, st, true); }, x, rng), x) < 1e-6);
    Tensor seq = random_tensor({2, 3, 6}, rng);
    Tensor lg = random_tensor({6}, rng, 0.5, 1.5), lb = random_tensor({6}, rng);
    CHECK(gradient_error(probe([&](const Tensor& t) { return ops::layer_norm(t, lg, lb); }, seq, rng), seq) < 1e-6);
  }

  TEST_CASE("conv2d forward matches a direct loop") {
    Rng rng(14);
    Tensor x = random_tensor({1, 2, 4, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor y = ops::conv2d(x, w, b, 2, 1);
    REQUIRE(y.shape() == Shape{1, 3, 2, 3});
    for (int o = 0; o < 3; ++o)
      for (int oy = 0; oy < 2; ++oy)
        for (int ox = 0; ox < 3; ++ox) {
          double s = b.at(o);
          for (int c = 0; c < 2; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                if (iy < 0 || iy >= 4 || ix < 0 || ix >= 5) continue;
                s += x.at((c * 4 + iy) * 5 + ix) * w.at(((o * 2 + c) * 3 + ky) * 3 + kx);
              }
          CHECK(y.at((o * 2 + oy) * 3 + ox) == doctest::Approx(s).epsilon(1e-12));
        }
  }

  TEST_CASE("results agree across kernel variants") {
    if (!kernels::supported(kernels::Isa::avx2)) return;
    Rng rng(15);
    Tensor x = random_tensor({2, 3, 9, 9}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    const kernels::Isa before = kernels::active_isa();
    kernels::select(kernels::Isa::scalar);
    Tensor a = ops::conv2d(x, w, Tensor(), 1, 1);
    kernels::select(kernels::Isa::avx2);
    Tensor b = ops::conv2d(x, w, Tensor(), 1, 1);
    kernels::select(before);
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(b.at(i) == doctest::Approx(a.at(i)).epsilon(1e-12));
  }

  TEST_CASE("no graph under NoGradGuard") {
    Tensor x = Tensor::full({2}, 1.0);
    x.set_requires_grad(true);
    {
      NoGradGuard g;
      CHECK_FALSE(grad_enabled());
      Tensor y = ops::mul(x, x);
      CHECK(y.impl()->node == nullptr);
    }
    CHECK(grad_enabled());
  }
}
