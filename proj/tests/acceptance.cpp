// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sslbench/analysis.hpp"
#include "sslbench/commands.hpp"
#include "sslbench/data.hpp"
#include "sslbench/heads.hpp"
#include "sslbench/io.hpp"
#include "sslbench/metrics.hpp"
#include "sslbench/ops.hpp"
#include "sslbench/ssl_losses.hpp"
#include "sslbench/sweep.hpp"
#include "sslbench/trainer.hpp"
#include "support.hpp"

using namespace sslbench;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void expect(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    if (detail.size() < 600) detail += (detail.empty() ? "" : "; ") + what;
  }
};

std::string fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

oracle::Mat rows(const Tensor& t) {
  oracle::Mat m(static_cast<std::size_t>(t.dim(0)), std::vector<double>(static_cast<std::size_t>(t.dim(1))));
  for (int i = 0; i < t.dim(0); ++i)
    for (int j = 0; j < t.dim(1); ++j) m[i][j] = t.at(static_cast<std::int64_t>(i) * t.dim(1) + j);
  return m;
}

std::vector<Tensor> split_rows(const Tensor& t, int workers) {
  std::vector<Tensor> out;
  const int per = t.dim(0) / workers;
  for (int w = 0; w < workers; ++w) out.push_back(ops::slice(t, 0, w * per, per));
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sslbench_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------

Verdict criterion1() {
  Verdict v;
  Rng rng(101);
  double worst = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 6 * (1 + static_cast<int>(rng.below(2)));
    const int d = 2 + static_cast<int>(rng.below(8));
    const double tau = rng.uniform(0.05, 1.0);
    Tensor q1 = testing::random_tensor({n, d}, rng), q2 = testing::random_tensor({n, d}, rng);
    Tensor k1 = testing::random_tensor({n, d}, rng), k2 = testing::random_tensor({n, d}, rng);
    const double want = oracle::moco_monolithic(rows(q1), rows(q2), rows(k1), rows(k2), tau);
    for (int workers : {1, 2, 3}) {
      const double got =
          mean_of(moco_v3_loss(split_rows(q1, workers), split_rows(q2, workers), split_rows(k1, workers),
                               split_rows(k2, workers), tau))
              .item();
      worst = std::max(worst, std::abs(got - want));
    }
    Tensor z1 = testing::random_tensor({n, d}, rng, -3, 3), z2 = testing::random_tensor({n, d}, rng, -3, 3);
    const double lambda = rng.uniform(1e-3, 1e-1);
    const double got = barlow_loss({barlow_normalize(z1)}, {barlow_normalize(z2)}, lambda).item();
    worst = std::max(worst, std::abs(got - oracle::barlow_monolithic(rows(z1), rows(z2), lambda)));
  }
  v.expect(worst < 1e-6, "contrastive/redundancy mismatch " + fmt(worst));

  int changed = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int n_p = 16, d_p = 3, b = 2;
    std::vector<MaskingPlan> plans{mae_mask(n_p, 0.75, rng.next()), mae_mask(n_p, 0.75, rng.next())};
    Tensor target = testing::random_tensor({b, n_p, d_p}, rng), pred = testing::random_tensor({b, n_p, d_p}, rng);
    const double base = mae_loss(pred, target, plans).item();
    Tensor moved = pred.clone();
    for (int i = 0; i < b; ++i)
      for (int tok : plans[static_cast<std::size_t>(i)].kept())
        for (int k = 0; k < d_p; ++k) moved.data()[(i * n_p + tok) * d_p + k] += rng.uniform(-10, 10);
    changed += mae_loss(moved, target, plans).item() != base;
  }
  v.expect(changed == 0, std::to_string(changed) + " masked-modelling losses moved");
  v.detail = "max |sharded - monolithic| " + fmt(worst) + (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

Verdict criterion2() {
  Verdict v;
  Rng rng(202);
  std::vector<std::pair<std::string, double>> errs;
  Tensor k1 = testing::random_tensor({6, 4}, rng), k2 = testing::random_tensor({6, 4}, rng);
  Tensor q2 = testing::random_tensor({6, 4}, rng);
  for (int workers : {1, 2, 3})
    errs.emplace_back("mocov3/" + std::to_string(workers), testing::gradient_error(
                                                               [&](const Tensor& q1) {
                                                                 return mean_of(moco_v3_loss(
                                                                     split_rows(q1, workers), split_rows(q2, workers),
                                                                     split_rows(k1, workers), split_rows(k2, workers), 0.2));
                                                               },
                                                               testing::random_tensor({6, 4}, rng)));
  Tensor z2 = testing::random_tensor({6, 4}, rng);
  errs.emplace_back("barlow", testing::gradient_error(
                                  [&](const Tensor& z1) {
                                    return barlow_loss(
                                        {barlow_normalize(ops::slice(z1, 0, 0, 3)), barlow_normalize(ops::slice(z1, 0, 3, 3))},
                                        {barlow_normalize(ops::slice(z2, 0, 0, 3)), barlow_normalize(ops::slice(z2, 0, 3, 3))},
                                        5e-3);
                                  },
                                  testing::random_tensor({6, 4}, rng)));
  const std::vector<MaskingPlan> plans{mae_mask(4, 0.5, 1), mae_mask(4, 0.5, 2)};
  Tensor target = testing::random_tensor({2, 4, 4}, rng);
  errs.emplace_back("mae", testing::gradient_error([&](const Tensor& p) { return mae_loss(p, target, plans); },
                                                   testing::random_tensor({2, 4, 4}, rng)));
  const std::vector<int> labels{2, 0, 1, 2, 1};
  const std::vector<double> weights{0.5, 2.0, 1.25};
  errs.emplace_back("weighted-ce", testing::gradient_error(
                                       [&](const Tensor& z) { return weighted_cross_entropy(z, labels, weights); },
                                       testing::random_tensor({5, 3}, rng, -2, 2)));
  Tensor mask = Tensor::zeros({2, 1, 4, 4});
  for (double& x : mask.values()) x = rng.bernoulli(0.5);
  errs.emplace_back("dice", testing::gradient_error([&](const Tensor& p) { return dice_loss(p, mask); },
                                                    testing::random_tensor({2, 1, 4, 4}, rng, 0.05, 0.95)));
  Tensor y = testing::random_tensor({2, 1, 4, 4}, rng, 0, 1);
  Tensor lens = Tensor::full({2, 1, 4, 4}, 1.0);
  lens.data()[0] = 0.0;
  lens.data()[19] = 0.0;
  errs.emplace_back("ssi+gradient", testing::gradient_error(
                                        [&](const Tensor& p) { return ssi_mse_loss(p, y, lens, SsiOptions{}); },
                                        testing::random_tensor({2, 1, 4, 4}, rng, 0, 1)));
  double worst = 0;
  for (const auto& [name, e] : errs) {
    worst = std::max(worst, e);
    v.expect(e < 1e-4, name + " rel. error " + fmt(e));
  }
  v.detail = "max rel. error " + fmt(worst) + " over " + std::to_string(errs.size()) + " checks" +
             (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

Verdict criterion3() {
  Verdict v;
  Rng rng(303);
  int mismatched = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int classes = 2 + static_cast<int>(rng.below(7));
    const int n = 1 + static_cast<int>(rng.below(300));
    std::vector<int> pred(n), truth(n);
    for (int i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.below(classes));
      pred[i] = rng.bernoulli(0.6) ? truth[i] : static_cast<int>(rng.below(classes));
    }
    const auto got = classification_metrics(confusion_counts(pred, truth, classes));
    const auto want = oracle::naive_classification(pred, truth, classes);
    mismatched += !(got.mF1 == want.mF1 && got.mPrecision == want.mPrecision && got.mRecall == want.mRecall &&
                    got.accuracy == want.accuracy);
  }
  v.expect(mismatched == 0, std::to_string(mismatched) + "/200 classification tables differ");

  double worst = 0;
  for (int scene = 0; scene < 100; ++scene) {
    const int images = 1 + static_cast<int>(rng.below(3));
    std::vector<std::vector<Box>> gts(images);
    std::vector<std::vector<oracle::Rect>> ogts(images);
    const int total = 1 + static_cast<int>(rng.below(10));
    for (int k = 0; k < total; ++k) {
      const int im = k == 0 ? 0 : static_cast<int>(rng.below(images));
      const double x = rng.uniform(0, 60), y = rng.uniform(0, 60);
      const Box b{x, y, x + rng.uniform(4, 25), y + rng.uniform(4, 25)};
      gts[im].push_back(b);
      ogts[im].push_back({b.x_min, b.y_min, b.x_max, b.y_max});
    }
    std::vector<ScoredBox> preds;
    std::vector<oracle::Det> dets;
    const int np = static_cast<int>(rng.below(11));
    for (int k = 0; k < np; ++k) {
      const int im = static_cast<int>(rng.below(images));
      Box b;
      if (!gts[im].empty() && rng.bernoulli(0.75)) {
        const Box& g = gts[im][rng.below(gts[im].size())];
        const double j = rng.uniform(0, 1.5);  // keeps jittered boxes non-degenerate
        b = {g.x_min + rng.uniform(-j, j), g.y_min + rng.uniform(-j, j), g.x_max + rng.uniform(-j, j),
             g.y_max + rng.uniform(-j, j)};
      } else {
        const double x = rng.uniform(0, 60), y = rng.uniform(0, 60);
        b = {x, y, x + rng.uniform(4, 25), y + rng.uniform(4, 25)};
      }
      const double s = rng.uniform(0.06, 1.0);
      preds.push_back({b, s, im});
      dets.push_back({{b.x_min, b.y_min, b.x_max, b.y_max}, s, im});
    }
    worst = std::max(worst, std::abs(ap_range(preds, gts).ap - oracle::textbook_ap_range(dets, ogts)));
  }
  v.expect(worst <= 1e-9, "AP differs from the textbook version by " + fmt(worst));

  const Box g{0, 0, 10, 10}, p{0, 0, 10, 6};
  const auto s = ap_range({{p, 0.9, 0}}, {{g}});
  v.expect(std::abs(box_iou(p, g) - 0.6) < 1e-15 && std::abs(s.ap - 0.2) < 1e-12 && s.ap50 == 1.0 && s.ap75 == 0.0,
           "worked example gives AP " + fmt(s.ap, "%.12g"));
  v.detail = "200 tables exact, max AP gap " + fmt(worst) + ", worked example AP " + fmt(s.ap, "%.12g") +
             (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

Verdict criterion4() {
  Verdict v;
  Rng rng(404);
  double loss_gap = 0, metric_gap = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const double a = rng.uniform(0.1, 10), b = rng.uniform(-5, 5);
    // depth loss on a batch of random maps
    Tensor y = testing::random_tensor({2, 1, 16, 16}, rng, 0, 1), p = testing::random_tensor({2, 1, 16, 16}, rng, 0, 1);
    Tensor lens = Tensor::zeros({2, 1, 16, 16});
    for (double& x : lens.values()) x = rng.bernoulli(0.85);
    const double l0 = ssi_mse_loss(p, y, lens, SsiOptions{}).item();
    const double l1 = ssi_mse_loss(ops::add_scalar(ops::scale(p, a), b), y, lens, SsiOptions{}).item();
    loss_gap = std::max(loss_gap, std::abs(l1 - l0));

    // post-processed metrics at the original resolution
    const int h = 24 + static_cast<int>(rng.below(17)), w = 24 + static_cast<int>(rng.below(17));
    Image target(1, h, w), lens_img(1, h, w);
    for (float& x : target.data) x = static_cast<float>(rng.uniform(0.05, 0.95));
    for (float& x : lens_img.data) x = rng.bernoulli(0.85) ? 1.0f : 0.0f;
    Image raw(1, 32, 32), moved(1, 32, 32);
    for (std::size_t i = 0; i < raw.data.size(); ++i) {
      raw.data[i] = static_cast<float>(rng.uniform(0, 1));
      moved.data[i] = static_cast<float>(a * raw.data[i] + b);
    }
    Image target_cm = target;
    for (float& x : target_cm.data) x *= static_cast<float>(kDepthRangeCm);
    auto metrics = [&](const Image& r) {
      const auto al = depth_alignment(r, target, lens_img);
      return depth_metrics({{depth_postprocess(r, al, lens_img), target_cm, lens_img}});
    };
    const DepthMetrics m0 = metrics(raw), m1 = metrics(moved);
    metric_gap = std::max({metric_gap, std::abs(m0.mRMSE - m1.mRMSE), std::abs(m0.mMRAE - m1.mMRAE),
                           std::abs(m0.mMAE - m1.mMAE)});
  }
  v.expect(loss_gap <= 1e-6, "depth loss moved by " + fmt(loss_gap));
  v.expect(metric_gap <= 1e-6, "post-processed metrics moved by " + fmt(metric_gap));

  std::vector<double> yv(64), pv(64), lv(64, 1.0);
  for (std::size_t i = 0; i < yv.size(); ++i) {
    yv[i] = rng.uniform(0, 1);
    pv[i] = 2 * yv[i] + 3;
  }
  const AlignmentSolution al = ssi_align(pv, yv, lv);
  v.expect(std::abs(al.s - 0.5) <= 1e-9 && std::abs(al.t + 1.5) <= 1e-9,
           "alignment of 2y+3 gave (" + fmt(al.s, "%.12g") + ", " + fmt(al.t, "%.12g") + ")");
  v.detail = "loss gap " + fmt(loss_gap) + ", metric gap " + fmt(metric_gap) + ", (s, t) = (" + fmt(al.s, "%.10g") +
             ", " + fmt(al.t, "%.10g") + ")" + (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

Verdict criterion5() {
  Verdict v;
  const double f1 = improvement(to_error(0.596, "mF1"), to_error(0.652, "mF1"));
  const double rmse = improvement(to_error(0.207, "mRMSE"), to_error(0.177, "mRMSE"));
  v.expect(std::abs(f1 - 13.86) <= 0.01, "mF1 improvement " + fmt(f1, "%.4f"));
  v.expect(std::abs(rmse - 14.49) <= 0.01, "mRMSE improvement " + fmt(rmse, "%.4f"));
  v.detail = "mF1 " + fmt(f1, "%+.4f") + "%, mRMSE " + fmt(rmse, "%+.4f") + "%" + (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

Verdict criterion6() {
  Verdict v;
  auto mass_error = [](const std::vector<long>& counts) {
    const ClassWeights cw = class_weights_from_counts(counts);
    double n_d = 0, mass = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      n_d += static_cast<double>(counts[i]);
      mass += static_cast<double>(counts[i]) * cw.weights[i];
    }
    return std::abs(mass - n_d) / n_d;
  };
  const double fixed = mass_error({1009, 9, 391, 999, 764, 932});
  v.expect(fixed <= 1e-6, "reference counts off by " + fmt(fixed));
  Rng rng(606);
  double worst = fixed;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<long> counts(2 + rng.below(9));
    for (long& c : counts) c = 1 + static_cast<long>(rng.below(5000));
    worst = std::max(worst, mass_error(counts));
  }
  v.expect(worst <= 1e-6, "random counts off by " + fmt(worst));
  v.detail = "max relative mass error " + fmt(worst) + (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

Verdict criterion7() {
  Verdict v;
  // Plateau schedule in isolation.
  {
    int stale = 0;
    double lr = 1e-4;
    int first_halving = -1;
    for (int epoch = 1; epoch <= 2000; ++epoch) {
      ++stale;
      const double next = lr_schedule_step(stale, lr, 10, 1e-6);
      if (first_halving < 0 && next != lr) {
        first_halving = epoch;
        v.expect(next == lr / 2, "first step is not a halving");
      }
      v.expect(next >= 1e-6, "rate below the floor");
      lr = next;
    }
    v.expect(first_halving == 10, "first halving after " + std::to_string(first_halving) + " stale epochs");
    v.expect(lr == 1e-6, "rate settles at " + fmt(lr));
  }

  const fs::path root = scratch("criterion7");
  std::ostringstream log;
  std::string summary;
  for (TaskKind task : {TaskKind::classification, TaskKind::segmentation, TaskKind::depth}) {
    const auto t0 = std::chrono::steady_clock::now();
    SyntheticSpec spec;
    spec.task = task;
    spec.n = 74;  // 60 / 7 / 7
    spec.side = 64;
    const DatasetManifest m = cmd_synth(spec, 21, root / "data" / to_string(task), log);
    long train = 0;
    for (const auto& r : m.records) train += r.split == "train";
    v.expect(train == 60, to_string(task) + " has " + std::to_string(train) + " training images");
    const fs::path cfg = root / (to_string(task) + ".cfg");
    write_file(cfg, "task = " + to_string(task) + "\nseed = 3\nencoder.arch = conv\ndata.manifest = data/" +
                        to_string(task) + "/manifest.json\ntrain.epochs = 20\ntrain.lr = 1e-3\n");
    const RunOutcome run = cmd_finetune(cfg, true, root / "store", log);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto losses = run.record.losses();
    const auto smooth = smoothed(losses, 3);
    const double reduction = 1.0 - smooth.back() / losses.front();
    v.expect(losses.size() == 20, to_string(task) + " ran " + std::to_string(losses.size()) + " epochs");
    v.expect(reduction >= 0.30, to_string(task) + " loss reduction " + fmt(100 * reduction, "%.1f") + "%");
    v.expect(secs < 600, to_string(task) + " took " + fmt(secs, "%.0f") + " s");
    // Replay the plateau rule against the recorded validation scores.
    int stale = 0;
    double lr = run.record.epochs.front().lr, best = 0;
    bool have_best = false;
    for (const auto& e : run.record.epochs) {
      v.expect(e.lr == lr, to_string(task) + " epoch " + std::to_string(e.epoch) + " used rate " + fmt(e.lr));
      const bool better = !have_best || (run.record.higher_is_better ? e.val_score > best : e.val_score < best);
      if (better) {
        best = e.val_score;
        have_best = true;
        stale = 0;
      } else {
        ++stale;
      }
      lr = lr_schedule_step(stale, lr, 10, 1e-6);
    }
    summary += (summary.empty() ? "" : ", ") + to_string(task) + " " + fmt(100 * reduction, "%.1f") + "% in " +
               fmt(secs, "%.0f") + " s";
  }
  fs::remove_all(root);
  v.detail = "smoothed loss reduction: " + summary + (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

void check_pairing(const AnalysisResult& res, Verdict& v) {
  for (const auto& r : res.rows) {
    bool ok = false;
    switch (r.kind) {
      case Comparison::sl_to_ssl:
        ok = r.base.algorithm == "supervised" && r.next.self_supervised() && r.base.data == "general" &&
             r.next.data == "general" && r.base.arch == r.next.arch;
        break;
      case Comparison::in_to_hk:
        ok = r.base.data == "general" && r.next.data == "domain" && r.base.algorithm == r.next.algorithm &&
             r.next.self_supervised() && r.base.arch == r.next.arch;
        break;
      case Comparison::rn_to_vt:
        ok = r.base.arch == "conv" && r.next.arch == "vit" && r.base.data == r.next.data &&
             r.base.algorithm == r.next.algorithm &&
             (r.next.algorithm == "mocov3" || r.next.algorithm == "supervised" || r.next.algorithm == "none");
        break;
    }
    v.expect(ok, "invalid pair " + comparison_label(r.kind) + " " + r.base.str() + " -> " + r.next.str());
  }
}

Verdict criterion8() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  SweepSpec spec;
  spec.root = scratch("criterion8");
  std::ostringstream log;
  const SweepOutcome out = run_sweep(spec, log);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  v.expect(out.finetunes.size() == 36, std::to_string(out.finetunes.size()) + " fine-tuning runs");
  const fs::path dir = spec.root / "store" / "analysis";
  for (const char* f : {"sl_to_ssl.csv", "sl_to_ssl.svg", "in_to_hk.csv", "in_to_hk.svg", "rn_to_vt.csv",
                        "rn_to_vt.svg", "ranking_radar.svg"})
    v.expect(fs::exists(dir / f) && fs::file_size(dir / f) > 0, std::string("missing ") + f);
  const auto& res = out.analysis.result;
  int counts[3] = {0, 0, 0};
  for (const auto& r : res.rows) ++counts[static_cast<int>(r.kind)];
  for (int k = 0; k < 3; ++k)
    v.expect(counts[k] == 12, comparison_label(static_cast<Comparison>(k)) + " has " + std::to_string(counts[k]) +
                                  " rows");
  check_pairing(res, v);
  v.expect(res.rankings.size() == 3, "rankings for " + std::to_string(res.rankings.size()) + " tasks");
  v.expect(secs < 7200, "sweep took " + fmt(secs, "%.0f") + " s");
  fs::remove_all(spec.root);
  v.detail = std::to_string(out.finetunes.size()) + " runs, rows SL->SSL/IN->HK/RN->VT " + std::to_string(counts[0]) +
             "/" + std::to_string(counts[1]) + "/" + std::to_string(counts[2]) + ", " + fmt(secs, "%.0f") + " s" +
             (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

Verdict criterion9() {
  Verdict v;
  std::vector<std::vector<std::string>> reports;
  for (const char* name : {"criterion9a", "criterion9b"}) {
    SweepSpec spec;
    spec.root = scratch(name);
    spec.only_pipelines = {"conv/none/none", "vit/domain/mae"};
    std::ostringstream log;
    const SweepOutcome out = run_sweep(spec, log);
    std::vector<std::string> bytes;
    for (const auto& r : out.finetunes) bytes.push_back(read_file(r.dir / "report.json"));
    reports.push_back(std::move(bytes));
    fs::remove_all(spec.root);
  }
  v.expect(reports[0].size() == 6, std::to_string(reports[0].size()) + " reports");
  v.expect(reports[0].size() == reports[1].size(), "different report counts");
  int differing = 0;
  for (std::size_t i = 0; i < std::min(reports[0].size(), reports[1].size()); ++i)
    differing += reports[0][i] != reports[1][i];
  v.expect(differing == 0, std::to_string(differing) + " report.json files differ");
  v.detail = std::to_string(reports[0].size()) + " report.json pairs compared, " + std::to_string(differing) +
             " differ" + (v.detail.empty() ? "" : "; " + v.detail);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  // Optional list of criterion numbers to run; all by default.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::stoi(argv[i]));
  const std::vector<std::function<Verdict()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9};
  // Wall-clock budgets in seconds; criterion 7 also checks each task.
  const double limits[9] = {10, 60, 600, 600, 600, 600, 1800, 7200, 7200};
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[k]();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= limits[k]) {
      v.pass = false;
      v.detail += "; exceeded the " + fmt(limits[k], "%.0f") + " s budget";
    }
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << " (" << fmt(secs, "%.1f") << " s) "
              << v.detail << std::endl;
    failed += !v.pass;
  }
  fs::remove_all(fs::temp_directory_path() / ("sslbench_acceptance_" + std::to_string(::getpid())));
  return failed == 0 ? 0 : 1;
}
