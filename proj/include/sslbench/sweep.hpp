#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sslbench/commands.hpp"

namespace sslbench {

// Desk-scale version of the full benchmark: for each architecture, the two
// self-supervised algorithms it supports times the two pretraining sets,
// plus supervised-proxy and random initialization (12 pipelines over both
// architectures), each fine-tuned on every task, then analyzed.
struct SweepSpec {
  std::filesystem::path root;  // data/, configs/ and the run store live here
  std::uint64_t seed = 7;
  int side = 32;
  int pretrain_images = 96;
  int task_images = 100;
  int pretrain_epochs = 4;
  int finetune_epochs = 6;
  std::vector<std::string> archs{"conv", "vit"};
  std::vector<TaskKind> tasks{TaskKind::classification, TaskKind::segmentation, TaskKind::depth};
  // Optional restriction to a subset of pipelines ("arch/data/algorithm").
  std::vector<std::string> only_pipelines;
};

struct SweepOutcome {
  std::vector<RunOutcome> finetunes;
  AnalyzeOutcome analysis;
};

// Synthesizes data, writes configs and runs every pretraining and
// fine-tuning job (skipping runs that are already complete).
SweepOutcome run_sweep(const SweepSpec& spec, std::ostream& log);

// The pipeline tags of the sweep in run order.
std::vector<std::string> sweep_pipelines(const std::vector<std::string>& archs);

}  // namespace sslbench
