#include <cmath>

#include "doctest.h"
#include "sslbench/augment.hpp"
#include "support.hpp"

using namespace sslbench;

namespace {

Image random_rgb(int h, int w, Rng& rng) {
  Image img(3, h, w);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

Image random_mask(int h, int w, Rng& rng) {
  Image m(1, h, w);
  for (float& v : m.data) v = rng.bernoulli(0.3) ? 1.0f : 0.0f;
  return m;
}

long foreground(const Image& m) {
  long n = 0;
  for (float v : m.data) n += v > 0.5f;
  return n;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(double(a.data[i]) - b.data[i]));
  return m;
}

}  // namespace

TEST_SUITE("augment") {
  TEST_CASE("identity parameters reduce training preprocessing to resize and normalize") {
    Rng rng(1);
    const Image img = random_rgb(40, 30, rng);
    const AugmentConfig id = AugmentConfig::identity(24);
    for (TaskKind t : {TaskKind::classification, TaskKind::segmentation, TaskKind::depth}) {
      const auto train = preprocess_train(img, t, 99, id);
      const auto eval = preprocess_eval(img, t, id);
      REQUIRE(train.image.height == eval.image.height);
      CHECK(max_abs_diff(train.image, eval.image) < 1e-5);
    }
  }

  TEST_CASE("training preprocessing is a pure function of the seed") {
    Rng rng(2);
    const Image img = random_rgb(32, 32, rng);
    AugmentConfig cfg;
    cfg.side = 32;
    for (TaskKind t : {TaskKind::classification, TaskKind::detection, TaskKind::segmentation, TaskKind::depth}) {
      const auto a = preprocess_train(img, t, 5, cfg);
      const auto b = preprocess_train(img, t, 5, cfg);
      CHECK(a.image == b.image);
      CHECK(replay(img, a.record, cfg) == a.image);
    }
    CHECK_FALSE(preprocess_train(img, TaskKind::classification, 5, cfg).image ==
                preprocess_train(img, TaskKind::classification, 6, cfg).image);
  }

  TEST_CASE("depth inputs are padded to a square before resizing") {
    Rng rng(3);
    const Image img = random_rgb(60, 100, rng);
    AugmentConfig cfg;
    cfg.side = 32;
    const auto out = preprocess_train(img, TaskKind::depth, 1, cfg);
    REQUIRE(out.record.ops.size() >= 2);
    CHECK(out.record.ops[0].kind == OpKind::pad);
    CHECK(out.record.ops[0].params[0] == 100);
    CHECK(out.record.ops[1].kind == OpKind::resize);
    CHECK(out.image.height == 32);
    CHECK(out.image.width == 32);
    const Image padded = pad_to_square(img);
    CHECK(padded.height == 100);
    CHECK(padded.at(0, 99, 0) == 0.0f);
    CHECK(padded.at(1, 10, 20) == img.at(1, 10, 20));
  }

  TEST_CASE("ops present per task follow the pipeline table") {
    Rng rng(4);
    const Image img = random_rgb(32, 32, rng);
    AugmentConfig cfg;
    cfg.side = 32;
    cfg.rot90_p = cfg.hflip_p = cfg.vflip_p = 1.0;
    auto kinds = [&](TaskKind t) {
      std::vector<OpKind> k;
      for (const auto& op : preprocess_train(img, t, 3, cfg).record.ops) k.push_back(op.kind);
      return k;
    };
    using O = OpKind;
    CHECK(kinds(TaskKind::detection) == std::vector<O>{O::jitter, O::blur, O::rot90, O::hflip, O::vflip, O::normalize});
    CHECK(kinds(TaskKind::classification) ==
          std::vector<O>{O::resize, O::jitter, O::blur, O::hflip, O::vflip, O::rotate, O::normalize});
    CHECK(kinds(TaskKind::segmentation) ==
          std::vector<O>{O::resize, O::jitter, O::blur, O::hflip, O::vflip, O::rotate, O::affine, O::normalize});
    CHECK(kinds(TaskKind::depth) == std::vector<O>{O::pad, O::resize, O::jitter, O::hflip, O::vflip, O::normalize});
  }

  TEST_CASE("view pairs differ and replay") {
    Rng rng(5);
    const Image img = random_rgb(32, 32, rng);
    AugmentConfig cfg;
    cfg.side = 32;
    const auto a = make_view_pair(img, 11, cfg);
    const auto b = make_view_pair(img, 11, cfg);
    CHECK(a.x1 == b.x1);
    CHECK(a.x2 == b.x2);
    CHECK_FALSE(a.x1 == a.x2);
    CHECK(replay(img, a.r2, cfg) == a.x2);
  }

  TEST_CASE("box mirroring") {
    TransformRecord rec{100, 100, {{OpKind::hflip, {}}}};
    const auto r = apply_to_boxes(rec, {{10, 20, 30, 40}});
    REQUIRE(r.boxes.size() == 1);
    CHECK(r.boxes[0] == Box{70, 20, 90, 40});
    const auto same = apply_to_boxes(TransformRecord{100, 100, {{OpKind::jitter, {0.5, 1, 1, 1}}}}, {{10, 20, 30, 40}});
    CHECK(same.boxes[0] == Box{10, 20, 30, 40});
    const auto gone = apply_to_boxes(TransformRecord{64, 64, {{OpKind::affine, {200, 0, 1, 0}}}}, {{10, 10, 20, 20}});
    CHECK(gone.boxes.empty());
    CHECK(gone.dropped == 1);
  }

  TEST_CASE("quarter turn of a mask remaps pixel indices") {
    Rng rng(6);
    const Image m = random_mask(5, 7, rng);
    const Image r = apply_to_mask(TransformRecord{5, 7, {{OpKind::rot90, {}}}}, m);
    REQUIRE(r.height == 7);
    REQUIRE(r.width == 5);
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 5; ++x) CHECK(r.at(0, y, x) == m.at(0, x, 7 - 1 - y));
  }

  TEST_CASE("flips and quarter turns keep the foreground count") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const Image m = random_mask(16, 16, rng);
      for (OpKind k : {OpKind::hflip, OpKind::vflip, OpKind::rot90}) {
        const Image r = apply_to_mask(TransformRecord{16, 16, {{k, {}}}}, m);
        CHECK(foreground(r) == foreground(m));
      }
    }
  }

  TEST_CASE("targets follow the image geometry") {
    Rng rng(8);
    AugmentConfig cfg;
    cfg.side = 32;
    const Image img = random_rgb(32, 32, rng);
    Image mask(1, 32, 32);
    for (int y = 4; y < 12; ++y)
      for (int x = 6; x < 20; ++x) mask.at(0, y, x) = 1.0f;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto a = preprocess_train(img, TaskKind::segmentation, seed, cfg);
      const Image tm = apply_to_mask(a.record, mask);
      CHECK(tm.height == a.image.height);
      for (float v : tm.data) CHECK((v == 0.0f || v == 1.0f));
      Image depth(1, 32, 32, 0.5f);
      depth.at(0, 3, 3) = 1.0f;
      for (float v : apply_to_depth(a.record, depth).data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }

  TEST_CASE("normalizing the mean colour gives zeros") {
    AugmentConfig cfg;
    Image img(3, 4, 4);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 16; ++i) img.data[static_cast<std::size_t>(c * 16 + i)] = static_cast<float>(cfg.mean[c]);
    for (float v : normalize(img, cfg).data) CHECK(std::abs(v) < 1e-6);
  }

  TEST_CASE("colour jitter with unit factors is the identity") {
    Rng rng(9);
    const Image img = random_rgb(8, 8, rng);
    CHECK(max_abs_diff(color_jitter(img, 1, 1, 1, 1), img) < 1e-5);
    const Image dark = color_jitter(img, 0.5, 1, 1, 1);
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(dark.data[i] == doctest::Approx(img.data[i] * 0.5).epsilon(1e-5));
  }
}
