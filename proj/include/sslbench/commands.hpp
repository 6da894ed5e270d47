#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>

#include "sslbench/analysis.hpp"
#include "sslbench/data.hpp"
#include "sslbench/metrics.hpp"
#include "sslbench/trainer.hpp"

namespace sslbench {

struct RunOutcome {
  std::string hash;
  std::filesystem::path dir;
  RunRecord record;
  MetricReport report;  // finetune only
};

// Each command logs progress lines to `log`. `root` overrides the store
// root (see RunStore::pick_root).
DatasetManifest cmd_synth(const SyntheticSpec& spec, std::uint64_t seed, const std::filesystem::path& out,
                          std::ostream& log);
RunOutcome cmd_pretrain(const std::filesystem::path& config, bool force, const std::filesystem::path& root,
                        std::ostream& log);
RunOutcome cmd_finetune(const std::filesystem::path& config, bool force, const std::filesystem::path& root,
                        std::ostream& log);
// Writes the report next to the predictions unless `out` is given.
MetricReport cmd_evaluate(const std::filesystem::path& predictions, const std::filesystem::path& manifest,
                          TaskKind task, const std::filesystem::path& out, std::ostream& log);

struct AnalyzeOutcome {
  AnalysisResult result;
  std::vector<std::filesystem::path> files;
};
// Collects every completed fine-tuning run of the store. `only` restricts
// the emitted comparison rows (empty = all three).
AnalyzeOutcome cmd_analyze(const std::filesystem::path& root, const std::filesystem::path& out,
                           const std::set<Comparison>& only, std::ostream& log);

}  // namespace sslbench
