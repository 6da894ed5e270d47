#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sslbench/data.hpp"
#include "sslbench/heads.hpp"
#include "sslbench/image.hpp"

namespace sslbench {

inline constexpr double kMetricEps = 1e-8;

// ---- classification ------------------------------------------------------

struct ConfusionCounts {
  std::vector<long> tp, fp, fn;
  long n_d = 0;
  int classes() const { return static_cast<int>(tp.size()); }
};

ConfusionCounts confusion_counts(const std::vector<int>& predicted, const std::vector<int>& truth, int classes);

struct ClassificationMetrics {
  double mF1 = 0, mPrecision = 0, mRecall = 0, accuracy = 0;
};
ClassificationMetrics classification_metrics(const ConfusionCounts& counts, double eps = kMetricEps);

// ---- detection -----------------------------------------------------------

struct ScoredBox {
  Box box;
  double score = 0.0;
  int image = 0;  // index into the per-image ground-truth list
};

double box_iou(const Box& a, const Box& b);

struct MatchResult {
  std::vector<bool> tp;  // per rank, highest score first
  long n_gt = 0;
  long fn = 0;
};

// Greedy matching in score order (stable on input order). With
// `one_to_one` off a target can absorb several predictions.
MatchResult match_and_count(const std::vector<ScoredBox>& preds, const std::vector<std::vector<Box>>& gts, double t,
                            bool one_to_one = true);
double average_precision(const MatchResult& m);

struct ApSummary {
  double ap = 0;    // mean over 0.50:0.05:0.95
  double ap50 = 0;
  double ap75 = 0;
  std::vector<double> per_threshold;
};
std::vector<double> ap_thresholds();
// Drops predictions scoring below `min_score` first.
ApSummary ap_range(const std::vector<ScoredBox>& preds, const std::vector<std::vector<Box>>& gts,
                   double min_score = 0.05, bool one_to_one = true);

// ---- segmentation --------------------------------------------------------

struct OverlapScores {
  double dice = 0, iou = 0, precision = 0, recall = 0;
};
// Binary masks of equal size (values > 0.5 are foreground).
OverlapScores overlap_scores(const Image& pred_binary, const Image& target, double eps = kMetricEps);
// Probability map at any size -> bilinear resize to the target size ->
// threshold at 0.5.
Image binarize_prediction(const Image& prob, int h, int w);

struct SegmentationMetrics {
  double mDice = 0, mIoU = 0, mPrecision = 0, mRecall = 0;
};
SegmentationMetrics segmentation_metrics(const std::vector<Image>& probs, const std::vector<Image>& targets,
                                         double eps = kMetricEps);

// ---- depth ---------------------------------------------------------------

inline constexpr double kDepthRangeCm = 10.0;

// Brings an original-size map into the network frame the way evaluation
// inputs are prepared (bottom/right pad to square, then resize).
Image to_network_frame(const Image& original, int side, Interp interp);

// Alignment of a raw prediction against the target at network scale, on
// the lens only.
AlignmentSolution depth_alignment(const Image& raw, const Image& target_unit, const Image& lens_original);

// Apply (s, t), resize to max(h, w) square, crop the top-left h x w, clip to
// [0, 1], zero off the lens, scale to centimetres.
Image depth_postprocess(const Image& raw, const AlignmentSolution& al, const Image& lens_original);

struct DepthEvalPair {
  Image pred_cm;    // post-processed, original size
  Image target_cm;  // original size
  Image lens;       // original size
};

struct DepthMetrics {
  double mRMSE = 0, mMRAE = 0, mMAE = 0;
  long zero_target_pixels = 0;  // lens pixels excluded from mMRAE
};
DepthMetrics depth_metrics(const std::vector<DepthEvalPair>& pairs);

// Mean of the two central values for an even count.
double median_of(std::vector<double> v);

// ---- reports -------------------------------------------------------------

struct MetricReport {
  TaskKind task = TaskKind::classification;
  std::vector<std::pair<std::string, double>> metrics;  // in emission order
  std::vector<std::string> flags;
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

  double metric(const std::string& name) const;
  nlohmann::ordered_json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  // Stable text: two equal reports serialize to the same bytes.
  std::string dump() const;
};

// Validation / ranking metric of each task and whether larger is better.
std::string primary_metric(TaskKind task);
bool higher_is_better(const std::string& metric);

// Scores a JSON-lines prediction file against the manifest's targets. Only
// the records named in the file are evaluated; relative asset paths resolve
// against the prediction file's directory.
MetricReport evaluate_predictions(const std::filesystem::path& predictions, const DatasetManifest& manifest,
                                  TaskKind task);

}  // namespace sslbench
