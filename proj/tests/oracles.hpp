#pragma once

// Reference implementations written independently of the library: plain
// loops over std::vector, no shared helpers, no tensors. Tests compare the
// library against these.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// -log softmax(cos(q, k_j) / tau)[pos], direct exponentials.
inline double info_nce(const std::vector<double>& q, const Mat& keys, std::size_t pos, double tau) {
  double denom = 0;
  for (const auto& k : keys) denom += std::exp(cosine(q, k) / tau);
  return -std::log(std::exp(cosine(q, keys[pos]) / tau) / denom);
}

// Whole batch in one process: every key is visible to every query, the
// positive of query n is key n. Returns the quantity the per-worker losses
// average to, (2 tau / N) * sum_n [INCE(q1_n | K2) + INCE(q2_n | K1)].
inline double moco_monolithic(const Mat& q1, const Mat& q2, const Mat& k1, const Mat& k2, double tau) {
  double s = 0;
  for (std::size_t n = 0; n < q1.size(); ++n) s += info_nce(q1[n], k2, n, tau) + info_nce(q2[n], k1, n, tau);
  return 2.0 * tau / static_cast<double>(q1.size()) * s;
}

inline Mat standardize_columns(const Mat& z, double eps) {
  const std::size_t n = z.size(), d = z[0].size();
  Mat out(n, std::vector<double>(d));
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += z[i][k];
    mean /= static_cast<double>(n);
    double var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (z[i][k] - mean) * (z[i][k] - mean);
    var /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[i][k] = (z[i][k] - mean) / std::sqrt(var + eps);
  }
  return out;
}

// Raw (unnormalized) representations of one batch.
inline double barlow_monolithic(const Mat& z1, const Mat& z2, double lambda, double eps = 1e-5) {
  const Mat a = standardize_columns(z1, eps), b = standardize_columns(z2, eps);
  const std::size_t n = a.size(), d = a[0].size();
  double loss = 0;
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t l = 0; l < d; ++l) {
      double c = 0;
      for (std::size_t i = 0; i < n; ++i) c += a[i][k] * b[i][l];
      c /= static_cast<double>(n);
      loss += k == l ? (1 - c) * (1 - c) : lambda * c * c;
    }
  return loss;
}

struct ClassScores {
  double mF1, mPrecision, mRecall, accuracy;
};

// Counts straight from the label lists, one class at a time.
inline ClassScores naive_classification(const std::vector<int>& pred, const std::vector<int>& truth, int classes,
                                        double eps = 1e-8) {
  ClassScores r{0, 0, 0, 0};
  long correct = 0;
  for (int c = 0; c < classes; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == c && truth[i] == c) ++tp;
      if (pred[i] == c && truth[i] != c) ++fp;
      if (pred[i] != c && truth[i] == c) ++fn;
    }
    const double t = static_cast<double>(tp), p = static_cast<double>(fp), n = static_cast<double>(fn);
    r.mF1 += (2.0 * t + eps) / (2.0 * t + p + n + eps);
    r.mPrecision += (t + eps) / (t + p + eps);
    r.mRecall += (t + eps) / (t + n + eps);
  }
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  r.mF1 /= classes;
  r.mPrecision /= classes;
  r.mRecall /= classes;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  return r;
}

struct Rect {
  double x0, y0, x1, y1;
};

inline double iou(const Rect& a, const Rect& b) {
  const double w = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double h = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = w * h;
  return inter / ((a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter);
}

struct Det {
  Rect box;
  double score;
  int image;
};

// Precision/recall curve walk: recall points are 0, the recall at each
// precision drop (an FP following a TP, or the end of a ranking that ends on
// a TP) short of full recall, and 1. The
// precision of a point is the precision where that recall was first reached;
// full recall never reached contributes 0.
inline double textbook_ap(std::vector<Det> dets, const std::vector<std::vector<Rect>>& gts, double t) {
  std::vector<std::size_t> idx(dets.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score != dets[b].score ? dets[a].score > dets[b].score : a < b;
  });
  std::vector<std::vector<char>> taken;
  double total = 0;
  for (const auto& g : gts) {
    taken.emplace_back(g.size(), 0);
    total += static_cast<double>(g.size());
  }
  std::vector<double> rec, prec;
  double tp = 0;
  std::vector<char> hit;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Det& d = dets[idx[r]];
    int best = -1;
    double best_iou = -1;
    for (std::size_t j = 0; j < gts[d.image].size(); ++j) {
      if (taken[d.image][j]) continue;
      const double v = iou(d.box, gts[d.image][j]);
      if (v > t && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) {
      taken[d.image][best] = 1;
      tp += 1;
    }
    hit.push_back(best >= 0);
    rec.push_back(tp / total);
    prec.push_back(tp / static_cast<double>(r + 1));
  }
  std::vector<double> points{0.0};
  for (std::size_t r = 1; r < hit.size(); ++r)
    if (!hit[r] && hit[r - 1] && rec[r] < 1.0) points.push_back(rec[r]);
  if (!hit.empty() && hit.back() && rec.back() < 1.0) points.push_back(rec.back());
  points.push_back(1.0);
  double ap = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    double p = 0;
    for (std::size_t r = 0; r < rec.size(); ++r)
      if (rec[r] == points[i]) {
        p = prec[r];
        break;
      }
    ap += (points[i] - points[i - 1]) * p;
  }
  return ap;
}

inline double textbook_ap_range(const std::vector<Det>& dets, const std::vector<std::vector<Rect>>& gts) {
  double s = 0;
  for (int k = 0; k < 10; ++k) s += textbook_ap(dets, gts, 0.5 + 0.05 * k);
  return s / 10.0;
}

// Central differences of a scalar function of a flat parameter vector.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0 ? 0.0 : std::sqrt(diff) / scale;
}

// Closed-form least squares of y on (x, 1) over the masked entries.
inline std::pair<double, double> affine_fit(const std::vector<double>& x, const std::vector<double>& y,
                                            const std::vector<double>& mask) {
  double sxx = 0, sx = 0, sxy = 0, sy = 0, n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask[i] <= 0.5) continue;
    sxx += x[i] * x[i];
    sx += x[i];
    sxy += x[i] * y[i];
    sy += y[i];
    n += 1;
  }
  const double det = n * sxx - sx * sx;
  return {(n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det};
}

}  // namespace oracle
