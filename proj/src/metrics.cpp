#include "sslbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "sslbench/errors.hpp"

namespace sslbench {

using nlohmann::json;
using nlohmann::ordered_json;

ConfusionCounts confusion_counts(const std::vector<int>& predicted, const std::vector<int>& truth, int classes) {
  require(predicted.size() == truth.size(), "prediction and label counts differ");
  require(classes >= 1, "need at least one class");
  ConfusionCounts c;
  c.tp.assign(static_cast<std::size_t>(classes), 0);
  c.fp = c.tp;
  c.fn = c.tp;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int p = predicted[i];
    const int y = truth[i];
    require(p >= 0 && p < classes && y >= 0 && y < classes, "class index out of range");
    if (p == y) {
      ++c.tp[static_cast<std::size_t>(y)];
    } else {
      ++c.fp[static_cast<std::size_t>(p)];
      ++c.fn[static_cast<std::size_t>(y)];
    }
  }
  c.n_d = static_cast<long>(truth.size());
  return c;
}

ClassificationMetrics classification_metrics(const ConfusionCounts& c, double eps) {
  require(c.n_d > 0, "classification metrics need at least one sample");
  require(c.fp.size() == c.tp.size() && c.fn.size() == c.tp.size() && !c.tp.empty(), "malformed confusion counts");
  ClassificationMetrics m;
  long tp_sum = 0;
  for (std::size_t i = 0; i < c.tp.size(); ++i) {
    require(c.tp[i] >= 0 && c.fp[i] >= 0 && c.fn[i] >= 0, "negative confusion count");
    const double tp = static_cast<double>(c.tp[i]);
    const double fp = static_cast<double>(c.fp[i]);
    const double fn = static_cast<double>(c.fn[i]);
    m.mF1 += (2.0 * tp + eps) / (2.0 * tp + fp + fn + eps);
    m.mPrecision += (tp + eps) / (tp + fp + eps);
    m.mRecall += (tp + eps) / (tp + fn + eps);
    tp_sum += c.tp[i];
  }
  require(tp_sum <= c.n_d, "more true positives than samples");
  const double k = static_cast<double>(c.tp.size());
  m.mF1 /= k;
  m.mPrecision /= k;
  m.mRecall /= k;
  m.accuracy = static_cast<double>(tp_sum) / static_cast<double>(c.n_d);
  return m;
}

// ---------------------------------------------------------------------------

namespace {
void check_box(const Box& b) {
  require(b.x_max > b.x_min && b.y_max > b.y_min, "degenerate box");
}
}  // namespace

double box_iou(const Box& a, const Box& b) {
  check_box(a);
  check_box(b);
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
  const double area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
  return inter / (area_a + area_b - inter);
}

MatchResult match_and_count(const std::vector<ScoredBox>& preds, const std::vector<std::vector<Box>>& gts, double t,
                            bool one_to_one) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  std::vector<std::vector<bool>> used(gts.size());
  MatchResult r;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    used[i].assign(gts[i].size(), false);
    r.n_gt += static_cast<long>(gts[i].size());
  }
  for (std::size_t k : order) {
    const ScoredBox& p = preds[k];
    require(p.image >= 0 && static_cast<std::size_t>(p.image) < gts.size(), "prediction for an unknown image");
    const auto& g = gts[static_cast<std::size_t>(p.image)];
    auto& u = used[static_cast<std::size_t>(p.image)];
    // Best-overlapping eligible target.
    double best = t;
    int best_j = -1;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (one_to_one && u[j]) continue;
      const double iou = box_iou(p.box, g[j]);
      if (iou > best) {
        best = iou;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0) u[static_cast<std::size_t>(best_j)] = true;
    r.tp.push_back(best_j >= 0);
  }
  for (const auto& u : used) r.fn += std::count(u.begin(), u.end(), false);
  return r;
}

double average_precision(const MatchResult& m) {
  if (m.n_gt <= 0) throw ValidationError("undefined recall: no ground-truth boxes");
  // Cumulative counts per rank. Recall is tracked as the integer TP count so
  // that "same recall" is an exact comparison.
  std::vector<long> tp_at;
  std::vector<double> prec_at;
  long tp = 0;
  for (std::size_t k = 0; k < m.tp.size(); ++k) {
    if (m.tp[k]) ++tp;
    tp_at.push_back(tp);
    prec_at.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
  }
  std::vector<long> levels{0};
  for (std::size_t k = 0; k < m.tp.size(); ++k)
    if (!m.tp[k] && tp_at[k] > 0 && tp_at[k] < m.n_gt && tp_at[k] != levels.back()) levels.push_back(tp_at[k]);
  // The end of the ranking acts as a final drop: past it the remaining
  // targets are never found.
  if (!tp_at.empty() && tp_at.back() > 0 && tp_at.back() < m.n_gt && tp_at.back() != levels.back())
    levels.push_back(tp_at.back());
  levels.push_back(m.n_gt);
  double ap = 0.0;
  for (std::size_t i = 1; i < levels.size(); ++i) {
    double p = 0.0;
    for (std::size_t k = 0; k < tp_at.size(); ++k)
      if (tp_at[k] == levels[i]) p = std::max(p, prec_at[k]);
    ap += static_cast<double>(levels[i] - levels[i - 1]) / static_cast<double>(m.n_gt) * p;
  }
  return ap;
}

std::vector<double> ap_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50.0 + 5.0 * k) / 100.0);
  return t;
}

ApSummary ap_range(const std::vector<ScoredBox>& preds, const std::vector<std::vector<Box>>& gts, double min_score,
                   bool one_to_one) {
  std::vector<ScoredBox> kept;
  for (const auto& p : preds)
    if (p.score >= min_score) kept.push_back(p);
  ApSummary s;
  for (double t : ap_thresholds()) s.per_threshold.push_back(average_precision(match_and_count(kept, gts, t, one_to_one)));
  double sum = 0.0;
  for (double v : s.per_threshold) sum += v;
  s.ap = sum / static_cast<double>(s.per_threshold.size());
  s.ap50 = s.per_threshold[0];
  s.ap75 = s.per_threshold[5];
  return s;
}

// ---------------------------------------------------------------------------

OverlapScores overlap_scores(const Image& pred, const Image& target, double eps) {
  require(pred.height == target.height && pred.width == target.width && pred.channels == 1 && target.channels == 1,
          "segmentation masks must be single-channel and the same size");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] > 0.5f;
    const bool y = target.data[i] > 0.5f;
    tp += (p && y) ? 1 : 0;
    fp += (p && !y) ? 1 : 0;
    fn += (!p && y) ? 1 : 0;
  }
  return {(2 * tp + eps) / (2 * tp + fp + fn + eps), (tp + eps) / (tp + fp + fn + eps), (tp + eps) / (tp + fp + eps),
          (tp + eps) / (tp + fn + eps)};
}

Image binarize_prediction(const Image& prob, int h, int w) {
  require(prob.channels == 1, "probability maps must be single-channel");
  Image r = (prob.height == h && prob.width == w) ? prob : resize(prob, h, w, Interp::bilinear);
  for (float& v : r.data) v = v >= 0.5f ? 1.0f : 0.0f;
  return r;
}

SegmentationMetrics segmentation_metrics(const std::vector<Image>& probs, const std::vector<Image>& targets,
                                         double eps) {
  require(!targets.empty(), "empty test set");
  require(probs.size() == targets.size(), "one prediction per target is required");
  SegmentationMetrics m;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const OverlapScores s = overlap_scores(binarize_prediction(probs[i], targets[i].height, targets[i].width),
                                           targets[i], eps);
    m.mDice += s.dice;
    m.mIoU += s.iou;
    m.mPrecision += s.precision;
    m.mRecall += s.recall;
  }
  const double n = static_cast<double>(targets.size());
  m.mDice /= n;
  m.mIoU /= n;
  m.mPrecision /= n;
  m.mRecall /= n;
  return m;
}

// ---------------------------------------------------------------------------

Image to_network_frame(const Image& original, int side, Interp interp) {
  Image sq = original.height == original.width ? original : pad_to_square(original, 0.0f);
  if (sq.height == side) return sq;
  Image r = resize(sq, side, side, interp);
  if (interp == Interp::nearest) return r;
  for (float& v : r.data) v = std::clamp(v, 0.0f, 1.0f);
  return r;
}

namespace {
std::vector<double> as_doubles(const Image& img) { return {img.data.begin(), img.data.end()}; }
}  // namespace

AlignmentSolution depth_alignment(const Image& raw, const Image& target_unit, const Image& lens_original) {
  require(raw.channels == 1 && raw.height == raw.width, "raw depth predictions must be square single-channel maps");
  const Image y = to_network_frame(target_unit, raw.height, Interp::bilinear);
  const Image m = to_network_frame(lens_original, raw.height, Interp::nearest);
  return ssi_align(as_doubles(raw), as_doubles(y), as_doubles(m));
}

Image depth_postprocess(const Image& raw, const AlignmentSolution& al, const Image& lens) {
  require(raw.channels == 1 && lens.channels == 1, "depth maps must be single-channel");
  const int h = lens.height;
  const int w = lens.width;
  const int side = std::max(h, w);
  Image a = raw;
  for (float& v : a.data) v = static_cast<float>(al.s * v + al.t);
  Image up = resize(a, side, side, Interp::bilinear);
  Image out = crop(up, 0, 0, h, w);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const float v = std::clamp(out.data[i], 0.0f, 1.0f);
    out.data[i] = lens.data[i] > 0.5f ? static_cast<float>(v * kDepthRangeCm) : 0.0f;
  }
  return out;
}

double median_of(std::vector<double> v) {
  require(!v.empty(), "median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

DepthMetrics depth_metrics(const std::vector<DepthEvalPair>& pairs) {
  require(!pairs.empty(), "empty test set");
  DepthMetrics m;
  long mrae_images = 0;
  for (const auto& p : pairs) {
    require(p.pred_cm.data.size() == p.target_cm.data.size() && p.lens.data.size() == p.target_cm.data.size(),
            "depth prediction, target and lens sizes differ");
    double se = 0.0, ae = 0.0, n = 0.0;
    std::vector<double> rel;
    for (std::size_t i = 0; i < p.target_cm.data.size(); ++i) {
      if (p.lens.data[i] <= 0.5f) continue;
      const double y = p.target_cm.data[i];
      require(std::isfinite(y), "non-finite depth target");
      const double d = static_cast<double>(p.pred_cm.data[i]) - y;
      se += d * d;
      ae += std::abs(d);
      n += 1.0;
      if (y == 0.0)
        ++m.zero_target_pixels;
      else
        rel.push_back(std::abs(d) / y);
    }
    require(n > 0, "lens mask covers no pixels");
    m.mRMSE += std::sqrt(se / n);
    m.mMAE += ae / n;
    if (!rel.empty()) {
      m.mMRAE += median_of(std::move(rel));
      ++mrae_images;
    }
  }
  const double k = static_cast<double>(pairs.size());
  m.mRMSE /= k;
  m.mMAE /= k;
  m.mMRAE = mrae_images > 0 ? m.mMRAE / static_cast<double>(mrae_images) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------

double MetricReport::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  throw ValidationError("report has no metric " + name);
}

ordered_json MetricReport::to_json() const {
  ordered_json j;
  j["task"] = to_string(task);
  ordered_json ms = ordered_json::object();
  for (const auto& [k, v] : metrics) ms[k] = v;
  j["metrics"] = ms;
  j["flags"] = flags;
  j["provenance"] = provenance;
  return j;
}

MetricReport MetricReport::from_json(const json& j) {
  MetricReport r;
  try {
    r.task = parse_task(j.at("task").get<std::string>());
    for (auto it = j.at("metrics").begin(); it != j.at("metrics").end(); ++it)
      r.metrics.emplace_back(it.key(), it.value().get<double>());
    if (j.contains("flags")) r.flags = j.at("flags").get<std::vector<std::string>>();
    if (j.contains("provenance")) r.provenance = ordered_json::parse(j.at("provenance").dump());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

std::string MetricReport::dump() const { return to_json().dump(2) + "\n"; }

std::string primary_metric(TaskKind task) {
  switch (task) {
    case TaskKind::classification: return "mF1";
    case TaskKind::detection: return "AP@[.5:.95]";
    case TaskKind::segmentation: return "mDice";
    case TaskKind::depth: return "mRMSE";
  }
  return "";
}

bool higher_is_better(const std::string& metric) {
  return !(metric == "mRMSE" || metric == "mMRAE" || metric == "mMAE" || metric == "mSSI-MSE");
}

// ---------------------------------------------------------------------------

namespace {

struct PredictionLine {
  int line = 0;
  json record;
};

std::vector<PredictionLine> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot read " + path.string());
  std::vector<PredictionLine> out;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(text);
      if (!j.is_object() || !j.contains("id") || !j["id"].is_string())
        throw ValidationError("record needs a string \"id\"");
      out.push_back({line, std::move(j)});
    } catch (const std::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": malformed prediction record: " + e.what());
    }
  }
  require(!out.empty(), path.string() + ": no prediction records");
  return out;
}

template <typename F>
auto field(const PredictionLine& p, const std::filesystem::path& file, F&& get) -> decltype(get(p.record)) {
  try {
    return get(p.record);
  } catch (const json::exception& e) {
    throw ValidationError(file.string() + ":" + std::to_string(p.line) + ": malformed prediction record: " + e.what());
  }
}

}  // namespace

MetricReport evaluate_predictions(const std::filesystem::path& path, const DatasetManifest& manifest, TaskKind task) {
  require(manifest.task_kind == task, "task flag " + to_string(task) + " does not match the manifest task " +
                                          to_string(manifest.task_kind));
  const auto lines = read_jsonl(path);
  const std::filesystem::path dir = path.parent_path();
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) by_id[manifest.records[i].id] = i;
  std::vector<std::size_t> index;
  for (const auto& p : lines) {
    auto it = by_id.find(p.record["id"].get<std::string>());
    if (it == by_id.end())
      throw ValidationError(path.string() + ":" + std::to_string(p.line) + ": id not in manifest");
    index.push_back(it->second);
  }

  MetricReport rep;
  rep.task = task;
  switch (task) {
    case TaskKind::classification: {
      const int classes = static_cast<int>(manifest.class_names.size());
      std::vector<int> pred, truth;
      for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto logits = field(lines[k], path, [](const json& j) { return j.at("logits").get<std::vector<double>>(); });
        if (static_cast<int>(logits.size()) != classes)
          throw ValidationError(path.string() + ":" + std::to_string(lines[k].line) + ": expected " +
                                std::to_string(classes) + " logits");
        pred.push_back(static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin()));
        truth.push_back(manifest.records[index[k]].label);
      }
      const auto m = classification_metrics(confusion_counts(pred, truth, classes));
      rep.metrics = {{"mF1", m.mF1}, {"mPrecision", m.mPrecision}, {"mRecall", m.mRecall}, {"Accuracy", m.accuracy}};
      break;
    }
    case TaskKind::detection: {
      std::vector<ScoredBox> preds;
      std::vector<std::vector<Box>> gts;
      for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto boxes = field(lines[k], path, [](const json& j) {
          return j.at("boxes").get<std::vector<std::vector<double>>>();
        });
        const auto scores = field(lines[k], path, [](const json& j) { return j.at("scores").get<std::vector<double>>(); });
        if (boxes.size() != scores.size())
          throw ValidationError(path.string() + ":" + std::to_string(lines[k].line) + ": boxes and scores differ in length");
        for (std::size_t b = 0; b < boxes.size(); ++b) {
          if (boxes[b].size() != 4 || !(boxes[b][2] > boxes[b][0] && boxes[b][3] > boxes[b][1]))
            throw ValidationError(path.string() + ":" + std::to_string(lines[k].line) + ": invalid box");
          preds.push_back({{boxes[b][0], boxes[b][1], boxes[b][2], boxes[b][3]}, scores[b], static_cast<int>(k)});
        }
        gts.push_back(read_boxes(manifest.resolve(manifest.records[index[k]].target)));
      }
      const auto s = ap_range(preds, gts);
      rep.metrics = {{"AP@[.5:.95]", s.ap}, {"AP@.5", s.ap50}, {"AP@.75", s.ap75}};
      rep.flags.push_back("one-to-one greedy matching");
      break;
    }
    case TaskKind::segmentation: {
      std::vector<Image> probs, targets;
      for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto rel = field(lines[k], path, [](const json& j) { return j.at("mask_path").get<std::string>(); });
        probs.push_back(read_png(dir / rel));
        LoadedSample s = load_sample(manifest, index[k]);
        targets.push_back(std::move(s.mask));
      }
      const auto m = segmentation_metrics(probs, targets);
      rep.metrics = {{"mDice", m.mDice}, {"mIoU", m.mIoU}, {"mPrecision", m.mPrecision}, {"mRecall", m.mRecall}};
      break;
    }
    case TaskKind::depth: {
      std::vector<DepthEvalPair> pairs;
      int degenerate = 0;
      for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto rel = field(lines[k], path, [](const json& j) { return j.at("depth_path").get<std::string>(); });
        const Image raw = read_png(dir / rel);
        LoadedSample s = load_sample(manifest, index[k]);
        AlignmentSolution al;
        if (lines[k].record.contains("alignment")) {
          al.s = field(lines[k], path, [](const json& j) { return j.at("alignment").at("s").get<double>(); });
          al.t = field(lines[k], path, [](const json& j) { return j.at("alignment").at("t").get<double>(); });
        } else {
          al = depth_alignment(raw, s.depth, s.lens);
        }
        degenerate += al.degenerate ? 1 : 0;
        Image target = s.depth;
        for (float& v : target.data) v = static_cast<float>(v * kDepthRangeCm);
        pairs.push_back({depth_postprocess(raw, al, s.lens), std::move(target), std::move(s.lens)});
      }
      const auto m = depth_metrics(pairs);
      rep.metrics = {{"mRMSE", m.mRMSE}, {"mMRAE", m.mMRAE}, {"mMAE", m.mMAE}};
      rep.flags.push_back("gradient-matching term: L1 on aligned residual differences, 4 dyadic scales");
      if (degenerate > 0) rep.flags.push_back("degenerate alignment on " + std::to_string(degenerate) + " image(s)");
      if (m.zero_target_pixels > 0)
        rep.flags.push_back("zero-depth target pixels excluded from mMRAE: " + std::to_string(m.zero_target_pixels));
      break;
    }
  }
  return rep;
}

}  // namespace sslbench
