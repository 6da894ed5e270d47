#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sslbench/image.hpp"

namespace sslbench {

enum class TaskKind { classification, detection, segmentation, depth };

std::string to_string(TaskKind task);
TaskKind parse_task(const std::string& name);

// Pixel box, x_max/y_max exclusive.
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
  bool operator==(const Box&) const = default;
};

// One manifest entry. Paths are relative to the manifest's directory.
struct ImageSample {
  std::string id;
  std::string image;
  int label = -1;       // classification
  std::string target;   // boxes JSON, mask PNG or depth PNG
  std::string lens;     // depth only
  std::string split;    // "train", "val", "test" or empty
};

struct DatasetManifest {
  TaskKind task_kind = TaskKind::classification;
  std::vector<std::string> class_names;
  std::vector<ImageSample> records;
  std::filesystem::path root;

  std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
};

// Checks label ranges and that every referenced file exists.
void validate_manifest(const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct SplitManifest {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  std::uint64_t seed = 0;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
};

// Shuffles record indices under `seed`; val/test sizes are floor(ratio * n)
// and the remainder goes to train.
SplitManifest split_dataset(const DatasetManifest& manifest, std::array<double, 3> ratios, std::uint64_t seed);
// Uses the records' split tags when every record has one.
SplitManifest splits_from_tags(const DatasetManifest& manifest);

struct ClassWeights {
  std::vector<double> weights;
};

// weight_i = N_D / (N_i * N_c) over the whole dataset.
ClassWeights class_weights(const DatasetManifest& manifest);
ClassWeights class_weights_from_counts(const std::vector<long>& counts);

// Decoded targets of one record.
struct LoadedSample {
  Image image;
  int label = -1;
  std::vector<Box> boxes;
  Image mask;   // 1 channel, 0/1
  Image depth;  // 1 channel, unit range
  Image lens;   // 1 channel, 0/1
};
LoadedSample load_sample(const DatasetManifest& manifest, std::size_t index);

std::vector<Box> read_boxes(const std::filesystem::path& path);
void write_boxes(const std::filesystem::path& path, const std::vector<Box>& boxes);

// Procedural stand-in data. "domain" draws pink mucosa-like scenes with
// textured lesions; "general" draws unrelated palettes and shapes and is the
// desk-scale substitute for a generic pretraining corpus.
struct SyntheticSpec {
  TaskKind task = TaskKind::classification;
  int n = 20;
  int side = 64;
  int classes = 3;
  std::string style = "domain";
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
};

struct SyntheticSample {
  Image image;
  int label = -1;
  std::vector<Box> boxes;
  Image mask;
  Image depth;
  Image lens;
};

SyntheticSample synthesize_sample(const SyntheticSpec& spec, std::uint64_t seed, int index);
// Writes images, targets and manifest.json under `dir`.
DatasetManifest generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed,
                                           const std::filesystem::path& dir);

// FNV-1a over the manifest file and every asset it references.
std::string dataset_hash(const DatasetManifest& manifest);

}  // namespace sslbench
