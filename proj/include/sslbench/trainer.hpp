#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sslbench/augment.hpp"
#include "sslbench/data.hpp"
#include "sslbench/encoders.hpp"
#include "sslbench/heads.hpp"
#include "sslbench/metrics.hpp"
#include "sslbench/ssl_losses.hpp"

namespace sslbench {

struct TrainConfig {
  int batch = 12;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int patience = 10;
  double lr_floor = 1e-6;
  int epochs = 20;
  std::uint64_t seed = 0;
  bool augment = true;
  SsiOptions ssi;
  HeadConfig heads;

  void validate() const;
  // Full-scale values: batch 48, 50 epochs (200 for segmentation).
  static TrainConfig full_scale(TaskKind task);
};

// Halves `rate` once `stale_epochs` reaches `patience` and resets the
// counter; never returns less than `floor`.
double lr_schedule_step(int& stale_epochs, double rate, int patience, double floor);

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_score = 0.0;
  bool has_val = false;
  double lr = 0.0;
  bool checkpointed = false;
};

struct RunRecord {
  std::string kind;  // "finetune" or "pretrain"
  std::string task;
  std::string metric;
  bool higher_is_better = true;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_score = 0.0;
  std::string checkpoint_id;
  std::string config_hash;
  double wall_clock_s = 0.0;
  int degenerate_alignments = 0;
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

  std::vector<double> losses() const;
  nlohmann::ordered_json to_json() const;
};

// Trailing mean over up to `window` epochs ending at each epoch.
std::vector<double> smoothed(const std::vector<double>& values, int window = 3);

// Stacks equally sized CHW images into a [B, C, H, W] tensor.
Tensor to_batch(const std::vector<Image>& images);
Image channel_image(const Tensor& t, int b);  // [B, 1, H, W] -> one map

// Every record of a manifest decoded once.
std::vector<LoadedSample> load_all(const DatasetManifest& manifest);

struct FinetuneInputs {
  const DatasetManifest* manifest = nullptr;
  std::vector<LoadedSample> samples;  // indexed like manifest records
  SplitManifest splits;
  AugmentConfig augment;
};

// Fine-tunes `model` on the train split, validates every epoch and stores
// the parameters of each strictly improving epoch at `checkpoint`. On
// return the model holds the best parameters. A non-finite loss aborts with
// a RuntimeError after writing a diagnostic snapshot next to the checkpoint.
RunRecord train(const TrainConfig& cfg, TaskModel& model, const FinetuneInputs& in,
                const std::filesystem::path& checkpoint, const nlohmann::ordered_json& meta);

// Validation score of the task (mF1, mDice or mSSI-MSE).
double validation_score(TaskModel& model, const FinetuneInputs& in, const std::vector<int>& indices, int batch,
                        int* degenerate = nullptr);

// Writes predictions.jsonl (and PNG assets for dense tasks) under `dir` for
// the given records; returns the JSONL path.
std::filesystem::path write_predictions(TaskModel& model, const FinetuneInputs& in, const std::vector<int>& indices,
                                        int batch, const std::filesystem::path& dir);

// Self-supervised or supervised-proxy pretraining of `encoder`. The final
// encoder state is written to `checkpoint` with the tensor prefix
// "encoder.". `enc_cfg` builds the momentum copy for mocov3.
RunRecord pretrain(const TrainConfig& cfg, const SSLConfig& ssl, const EncoderConfig& enc_cfg, Encoder& encoder,
                   const DatasetManifest& data, const AugmentConfig& aug, const std::filesystem::path& checkpoint,
                   const nlohmann::ordered_json& meta);

}  // namespace sslbench
