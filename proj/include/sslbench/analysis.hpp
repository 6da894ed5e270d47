#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sslbench/metrics.hpp"

namespace sslbench {

struct ErrorValue {
  double delta = 0.0;
  std::string metric;
  bool from_score = true;  // false when the metric already measures error
};

ErrorValue to_error(double value, const std::string& metric);
// 100 * (base - new) / base
double improvement(const ErrorValue& base, const ErrorValue& next);

// arch: conv | vit; data: domain | general | none;
// algorithm: mocov3 | barlow | mae | supervised | none
struct PipelineTag {
  std::string arch;
  std::string data;
  std::string algorithm;

  std::string str() const { return arch + "/" + data + "/" + algorithm; }
  bool self_supervised() const { return algorithm == "mocov3" || algorithm == "barlow" || algorithm == "mae"; }
  void validate() const;
  bool operator==(const PipelineTag&) const = default;
};

struct RunSummary {
  std::string run_id;
  PipelineTag tag;
  MetricReport report;
};

enum class Comparison { sl_to_ssl, in_to_hk, rn_to_vt };
std::string to_string(Comparison c);
std::string comparison_label(Comparison c);  // "SL->SSL" etc.

struct ComparisonRow {
  Comparison kind{};
  TaskKind task{};
  std::string metric;
  PipelineTag base;
  PipelineTag next;
  double delta_base = 0.0;
  double delta_next = 0.0;
  double percent = 0.0;
};

struct RankedModel {
  PipelineTag tag;
  double value = 0.0;
};

// Best first under the task's primary metric; ties go to the
// lexicographically smaller tag string.
std::vector<RankedModel> rank_models(const std::vector<RunSummary>& runs);

struct Exclusion {
  std::string run_id;
  std::string tag;
  std::string reason;
};

struct AnalysisResult {
  std::vector<ComparisonRow> rows;  // grouped by comparison, then task, then tag
  std::vector<Exclusion> excluded;
  std::map<TaskKind, std::vector<RankedModel>> rankings;
};

// Forms every valid pairing:
//   SL->SSL  supervised vs self-supervised, general pretraining set only;
//   IN->HK   general vs domain pretraining set, self-supervised runs only;
//   RN->VT   conv vs vit, same data and algorithm, mocov3/supervised/none.
// Pairs always share architecture (except RN->VT), data (except IN->HK),
// algorithm (except SL->SSL) and task.
AnalysisResult analyze(const std::vector<RunSummary>& runs);

// analysis.json, comparisons.csv, one CSV and one bar chart per comparison,
// ranking.csv and the radar ranking figure. Returns the written paths.
std::vector<std::filesystem::path> write_analysis(const AnalysisResult& result, const std::filesystem::path& dir);

}  // namespace sslbench
