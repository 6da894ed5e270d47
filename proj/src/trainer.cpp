#include "sslbench/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "sslbench/checkpoint.hpp"
#include "sslbench/errors.hpp"
#include "sslbench/io.hpp"
#include "sslbench/optim.hpp"

namespace sslbench {

using nlohmann::ordered_json;

void TrainConfig::validate() const {
  require(batch >= 2, "batch size must be at least 2 (batch normalization needs two samples)");
  require(lr > 0.0 && std::isfinite(lr), "learning rate must be positive");
  require(weight_decay >= 0.0, "weight decay must be non-negative");
  require(patience >= 1, "plateau patience must be at least 1");
  require(lr_floor > 0.0 && lr_floor <= lr, "learning-rate floor must be positive and not above the initial rate");
  require(epochs >= 1, "epochs must be at least 1");
  require(ssi.scales >= 1 && ssi.grad_weight >= 0.0, "invalid gradient-matching settings");
}

TrainConfig TrainConfig::full_scale(TaskKind task) {
  TrainConfig c;
  c.batch = 48;
  c.epochs = task == TaskKind::segmentation ? 200 : 50;
  return c;
}

double lr_schedule_step(int& stale_epochs, double rate, int patience, double floor) {
  require(rate >= floor, "learning rate below its floor");
  if (stale_epochs < patience) return rate;
  stale_epochs = 0;
  return std::max(rate / 2.0, floor);
}

std::vector<double> RunRecord::losses() const {
  std::vector<double> v;
  for (const auto& e : epochs) v.push_back(e.train_loss);
  return v;
}

ordered_json RunRecord::to_json() const {
  ordered_json j;
  j["kind"] = kind;
  j["task"] = task;
  j["metric"] = metric;
  j["higher_is_better"] = higher_is_better;
  j["epochs"] = ordered_json::array();
  for (const auto& e : epochs) {
    ordered_json row{{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.has_val) row["val_score"] = e.val_score;
    row["lr"] = e.lr;
    row["checkpointed"] = e.checkpointed;
    j["epochs"].push_back(row);
  }
  j["best_epoch"] = best_epoch;
  j["best_score"] = best_score;
  j["checkpoint_id"] = checkpoint_id;
  j["config_hash"] = config_hash;
  j["degenerate_alignments"] = degenerate_alignments;
  j["wall_clock_s"] = wall_clock_s;
  j["provenance"] = provenance;
  return j;
}

std::vector<double> smoothed(const std::vector<double>& v, int window) {
  require(window >= 1, "smoothing window must be positive");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - static_cast<std::size_t>(window) : 0;
    double s = 0.0;
    for (std::size_t k = lo; k <= i; ++k) s += v[k];
    out.push_back(s / static_cast<double>(i - lo + 1));
  }
  return out;
}

Tensor to_batch(const std::vector<Image>& images) {
  require(!images.empty(), "empty batch");
  const Image& f = images.front();
  std::vector<double> data;
  data.reserve(images.size() * f.data.size());
  for (const auto& im : images) {
    require(im.channels == f.channels && im.height == f.height && im.width == f.width,
            "batch images differ in size");
    data.insert(data.end(), im.data.begin(), im.data.end());
  }
  return Tensor::from({static_cast<int>(images.size()), f.channels, f.height, f.width}, std::move(data));
}

Image channel_image(const Tensor& t, int b) {
  require(t.ndim() == 4 && t.dim(1) == 1, "expected [B, 1, H, W]");
  Image im(1, t.dim(2), t.dim(3));
  const std::size_t n = im.data.size();
  for (std::size_t i = 0; i < n; ++i) im.data[i] = static_cast<float>(t.data()[static_cast<std::size_t>(b) * n + i]);
  return im;
}

std::vector<LoadedSample> load_all(const DatasetManifest& m) {
  std::vector<LoadedSample> out;
  out.reserve(m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) out.push_back(load_sample(m, i));
  return out;
}

namespace {

struct Prepared {
  Image image;
  Image target;
  Image lens;
};

Prepared prepare(const LoadedSample& s, TaskKind task, bool train, std::uint64_t seed, const AugmentConfig& aug) {
  Augmented a = train ? preprocess_train(s.image, task, seed, aug) : preprocess_eval(s.image, task, aug);
  Prepared p;
  p.image = std::move(a.image);
  if (task == TaskKind::segmentation) p.target = apply_to_mask(a.record, s.mask);
  if (task == TaskKind::depth) {
    p.target = apply_to_depth(a.record, s.depth);
    p.lens = apply_to_mask(a.record, s.lens);
  }
  return p;
}

std::vector<std::vector<int>> make_batches(std::vector<int> order, int batch, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(std::span<int>(order));
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch));
    out.emplace_back(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(end));
  }
  // A single trailing sample cannot be batch-normalized; fold it into the
  // previous batch.
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

bool improves(double value, double best, bool higher) { return higher ? value > best : value < best; }

std::string validation_metric(TaskKind task) {
  switch (task) {
    case TaskKind::classification: return "mF1";
    case TaskKind::segmentation: return "mDice";
    case TaskKind::depth: return "mSSI-MSE";
    default: throw ValidationError("no validation metric for task " + to_string(task));
  }
}

Tensor task_loss(TaskKind task, const Tensor& out, const std::vector<Prepared>& batch, const std::vector<int>& labels,
                 const std::vector<double>& weights, const SsiOptions& ssi, int* degenerate) {
  switch (task) {
    case TaskKind::classification: return weighted_cross_entropy(out, labels, weights);
    case TaskKind::segmentation: {
      std::vector<Image> t;
      for (const auto& p : batch) t.push_back(p.target);
      return dice_loss(out, to_batch(t));
    }
    case TaskKind::depth: {
      std::vector<Image> t, l;
      for (const auto& p : batch) {
        t.push_back(p.target);
        l.push_back(p.lens);
      }
      return ssi_mse_loss(out, to_batch(t), to_batch(l), ssi, degenerate);
    }
    default: throw ValidationError("unsupported fine-tuning task " + to_string(task));
  }
}

[[noreturn]] void abort_non_finite(const std::filesystem::path& checkpoint, int epoch, int step, double loss, double lr,
                                   const std::vector<std::string>& ids) {
  ordered_json snap{{"error", "non-finite loss"}, {"epoch", epoch}, {"step", step},
                    {"loss", std::isnan(loss) ? "nan" : (loss > 0 ? "inf" : "-inf")},
                    {"lr", lr}, {"batch_ids", ids}};
  const auto path = checkpoint.parent_path() / "diagnostic.json";
  std::string where;
  try {
    write_file(path, snap.dump(2) + "\n");
    where = "; snapshot written to " + path.string();
  } catch (const std::exception&) {
  }
  throw RuntimeError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + where);
}

}  // namespace

double validation_score(TaskModel& model, const FinetuneInputs& in, const std::vector<int>& indices, int batch,
                        int* degenerate) {
  require(!indices.empty(), "validation split is empty");
  const TaskKind task = model.task();
  NoGradGuard ng;
  model.eval();
  std::vector<int> pred, truth;
  std::vector<Image> probs, masks;
  double ssi_sum = 0.0;
  int degen = 0;
  for (std::size_t i = 0; i < indices.size(); i += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(indices.size(), i + static_cast<std::size_t>(batch));
    std::vector<Prepared> ps;
    std::vector<Image> ims;
    for (std::size_t k = i; k < end; ++k) {
      ps.push_back(prepare(in.samples[static_cast<std::size_t>(indices[k])], task, false, 0, in.augment));
      ims.push_back(ps.back().image);
    }
    const Tensor out = model.forward(to_batch(ims));
    for (std::size_t k = i; k < end; ++k) {
      const int b = static_cast<int>(k - i);
      const LoadedSample& s = in.samples[static_cast<std::size_t>(indices[k])];
      if (task == TaskKind::classification) {
        const int c = out.dim(1);
        const double* z = out.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(c);
        pred.push_back(static_cast<int>(std::max_element(z, z + c) - z));
        truth.push_back(s.label);
      } else if (task == TaskKind::segmentation) {
        probs.push_back(channel_image(out, b));
        masks.push_back(s.mask);
      } else {
        const Image raw = channel_image(out, b);
        const Prepared& p = ps[static_cast<std::size_t>(b)];
        const std::vector<double> x(raw.data.begin(), raw.data.end());
        const std::vector<double> y(p.target.data.begin(), p.target.data.end());
        const std::vector<double> l(p.lens.data.begin(), p.lens.data.end());
        degen += ssi_align(x, y, l).degenerate ? 1 : 0;
        ssi_sum += ssi_mse_value(x, y, l);
      }
    }
  }
  model.train();
  if (degenerate) *degenerate = degen;
  if (task == TaskKind::classification)
    return classification_metrics(confusion_counts(pred, truth, model.classifier()->classes())).mF1;
  if (task == TaskKind::segmentation) return segmentation_metrics(probs, masks).mDice;
  return ssi_sum / static_cast<double>(indices.size());
}

RunRecord train(const TrainConfig& cfg, TaskModel& model, const FinetuneInputs& in,
                const std::filesystem::path& checkpoint, const ordered_json& meta) {
  cfg.validate();
  require(in.manifest != nullptr, "fine-tuning needs a manifest");
  const TaskKind task = model.task();
  require(in.manifest->task_kind == task, "model task " + to_string(task) + " does not match the dataset task " +
                                              to_string(in.manifest->task_kind));
  require(!in.splits.train.empty(), "training split is empty");
  require(in.splits.train.size() >= 2, "training split needs at least two images");
  require(!in.splits.val.empty(), "validation split is empty");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<double> weights;
  if (task == TaskKind::classification) weights = class_weights(*in.manifest).weights;

  RunRecord rec;
  rec.kind = "finetune";
  rec.task = to_string(task);
  rec.metric = validation_metric(task);
  rec.higher_is_better = higher_is_better(rec.metric);
  double best = rec.higher_is_better ? -std::numeric_limits<double>::infinity()
                                     : std::numeric_limits<double>::infinity();

  AdamW opt(model.parameters(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  double lr = cfg.lr;
  int stale = 0;
  model.train();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    long seen = 0;
    int step = 0;
    for (const auto& ids : make_batches(in.splits.train, cfg.batch, derive_seed(cfg.seed, 0x5f1e, epoch))) {
      std::vector<Prepared> batch;
      std::vector<Image> ims;
      std::vector<int> labels;
      for (int idx : ids) {
        const std::uint64_t s = derive_seed(cfg.seed, 0xa11, epoch, static_cast<std::uint64_t>(idx));
        batch.push_back(prepare(in.samples[static_cast<std::size_t>(idx)], task, cfg.augment, s, in.augment));
        ims.push_back(batch.back().image);
        labels.push_back(in.samples[static_cast<std::size_t>(idx)].label);
      }
      const Tensor out = model.forward(to_batch(ims));
      int degen = 0;
      Tensor loss = task_loss(task, out, batch, labels, weights, cfg.ssi, &degen);
      rec.degenerate_alignments += degen;
      ++step;
      if (!std::isfinite(loss.item())) {
        std::vector<std::string> names;
        for (int idx : ids) names.push_back(in.manifest->records[static_cast<std::size_t>(idx)].id);
        abort_non_finite(checkpoint, epoch, step, loss.item(), lr, names);
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
      loss_sum += loss.item() * static_cast<double>(ids.size());
      seen += static_cast<long>(ids.size());
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(seen);
    log.lr = lr;
    log.has_val = true;
    log.val_score = validation_score(model, in, in.splits.val, cfg.batch);
    if (!std::isfinite(log.val_score)) throw RuntimeError("non-finite validation score at epoch " + std::to_string(epoch));
    if (improves(log.val_score, best, rec.higher_is_better)) {
      best = log.val_score;
      rec.best_epoch = epoch;
      rec.best_score = best;
      log.checkpointed = true;
      ordered_json m = meta;
      m["epoch"] = epoch;
      save_checkpoint(checkpoint, m, model.state());
      stale = 0;
    } else {
      ++stale;
    }
    rec.epochs.push_back(log);
    lr = lr_schedule_step(stale, lr, cfg.patience, cfg.lr_floor);
    opt.set_lr(lr);
  }
  load_module_state(load_checkpoint(checkpoint), model);
  rec.checkpoint_id = checkpoint_id(checkpoint);
  rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::filesystem::path write_predictions(TaskModel& model, const FinetuneInputs& in, const std::vector<int>& indices,
                                        int batch, const std::filesystem::path& dir) {
  require(!indices.empty(), "no records to predict");
  const TaskKind task = model.task();
  NoGradGuard ng;
  model.eval();
  std::string lines;
  for (std::size_t i = 0; i < indices.size(); i += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(indices.size(), i + static_cast<std::size_t>(batch));
    std::vector<Image> ims;
    for (std::size_t k = i; k < end; ++k)
      ims.push_back(prepare(in.samples[static_cast<std::size_t>(indices[k])], task, false, 0, in.augment).image);
    const Tensor out = model.forward(to_batch(ims));
    for (std::size_t k = i; k < end; ++k) {
      const int b = static_cast<int>(k - i);
      const std::string& id = in.manifest->records[static_cast<std::size_t>(indices[k])].id;
      ordered_json j{{"id", id}};
      if (task == TaskKind::classification) {
        const int c = out.dim(1);
        const double* z = out.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(c);
        j["logits"] = std::vector<double>(z, z + c);
      } else if (task == TaskKind::segmentation) {
        const std::string rel = "masks/" + id + ".png";
        write_png_gray16(dir / rel, channel_image(out, b));
        j["mask_path"] = rel;
      } else {
        const std::string rel = "depth/" + id + ".png";
        write_png_gray16(dir / rel, channel_image(out, b));
        j["depth_path"] = rel;
      }
      lines += j.dump() + "\n";
    }
  }
  model.train();
  const auto path = dir / "predictions.jsonl";
  write_file(path, lines);
  return path;
}

// ---- pretraining ----------------------------------------------------------

namespace {

// Encoder followed by a projector MLP.
class Branch : public nn::Module {
 public:
  Branch(Encoder& enc, int hidden, Rng& rng) : enc_(enc), proj_(enc.feature_dim(), hidden, enc.feature_dim(), rng) {
    register_module("encoder", enc_);
    register_module("projector", proj_);
  }
  Tensor forward(const Tensor& x) { return proj_.forward(enc_.forward(x).pooled); }

 private:
  Encoder& enc_;
  nn::Mlp proj_;
};

// Two-block decoder at half the encoder width.
class MaeDecoder : public nn::Module {
 public:
  MaeDecoder(int embed, int n_patches, int patch_dim, Rng& rng)
      : dim_(std::max(2, embed / 2)), in_(embed, dim_, rng), norm_(dim_), out_(dim_, patch_dim, rng) {
    register_module("embed", in_);
    mask_token_ = register_parameter("mask_token", Tensor::zeros({dim_}));
    std::vector<double> pos(static_cast<std::size_t>(n_patches) * dim_);
    for (double& v : pos) v = rng.normal(0.0, 0.02);
    pos_ = register_parameter("pos_embed", Tensor::from({n_patches, dim_}, std::move(pos)));
    const int heads = dim_ % 2 == 0 ? 2 : 1;
    for (int i = 0; i < kBlocks; ++i) {
      blocks_.push_back(std::make_unique<TransformerBlock>(dim_, heads, 4, rng));
      register_module("block" + std::to_string(i), *blocks_.back());
    }
    register_module("norm", norm_);
    register_module("head", out_);
  }
  // latent: [B, 1 + K, D] from the masked encoder -> [B, N, patch_dim]
  Tensor forward(const Tensor& latent, const std::vector<MaskingPlan>& plans) {
    const int k = latent.dim(1) - 1;
    Tensor kept = in_.forward(ops::slice(latent, 1, 1, k));
    Tensor h = ops::add(mae_reinsert(kept, plans, mask_token_), pos_);
    for (auto& b : blocks_) h = b->forward(h, Tensor());
    return out_.forward(norm_.forward(h));
  }

 private:
  static constexpr int kBlocks = 2;
  int dim_;
  nn::Linear in_;
  std::vector<std::unique_ptr<TransformerBlock>> blocks_;
  nn::LayerNorm norm_;
  nn::Linear out_;
  Tensor mask_token_;
  Tensor pos_;
};

std::vector<Tensor> shards(const Tensor& x, int workers, int per) {
  std::vector<Tensor> out;
  for (int w = 0; w < workers; ++w) out.push_back(ops::slice(x, 0, w * per, per));
  return out;
}

}  // namespace

RunRecord pretrain(const TrainConfig& cfg, const SSLConfig& ssl, const EncoderConfig& enc_cfg, Encoder& encoder,
                   const DatasetManifest& data, const AugmentConfig& aug, const std::filesystem::path& checkpoint,
                   const ordered_json& meta) {
  cfg.validate();
  const std::string& alg = ssl.algorithm;
  if (alg == "mae" && encoder.arch() != "vit") throw ValidationError("MAE requires token encoder");
  auto* vit = dynamic_cast<ViTEncoder*>(&encoder);
  ssl.validate(vit ? vit->grid() * vit->grid() : 0);
  require(aug.side == (vit ? vit->config().image : aug.side), "augmentation side must match the ViT image size");
  if (alg == "supervised")
    require(data.task_kind == TaskKind::classification, "supervised-proxy pretraining needs a classification dataset");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<int> pool;
  for (std::size_t i = 0; i < data.records.size(); ++i)
    if (data.records[i].split.empty() || data.records[i].split == "train") pool.push_back(static_cast<int>(i));
  const int logical = alg == "supervised" || alg == "mae" ? cfg.batch : ssl.workers * ssl.per_worker_batch;
  require(static_cast<int>(pool.size()) >= logical,
          "pretraining set has " + std::to_string(pool.size()) + " images, fewer than one batch of " +
              std::to_string(logical));
  std::vector<Image> images;
  for (std::size_t i = 0; i < data.records.size(); ++i) images.push_back(read_png(data.resolve(data.records[i].image)));

  Rng rng(derive_seed(cfg.seed, 0x9e7));
  const int fd = encoder.feature_dim();
  const int hidden = 4 * fd;
  std::unique_ptr<Branch> online;
  std::unique_ptr<nn::Mlp> predictor;
  std::unique_ptr<Encoder> mom_encoder;
  std::unique_ptr<Branch> momentum;
  std::unique_ptr<EmaShadow> ema;
  std::unique_ptr<MaeDecoder> mae_dec;
  std::unique_ptr<Classifier> classifier;
  std::vector<double> weights;
  std::vector<nn::NamedTensor> params;
  auto append = [&](const nn::Module& m) {
    auto p = m.parameters();
    params.insert(params.end(), p.begin(), p.end());
  };
  if (alg == "mocov3" || alg == "barlow") {
    online = std::make_unique<Branch>(encoder, hidden, rng);
    append(*online);
    if (alg == "mocov3") {
      predictor = std::make_unique<nn::Mlp>(fd, hidden, fd, rng);
      append(*predictor);
      mom_encoder = make_encoder(enc_cfg, rng);
      momentum = std::make_unique<Branch>(*mom_encoder, hidden, rng);
      ema = std::make_unique<EmaShadow>(*online, *momentum, ssl.momentum);
    }
  } else if (alg == "mae") {
    const int p = vit->config().patch;
    mae_dec = std::make_unique<MaeDecoder>(fd, vit->grid() * vit->grid(), 3 * p * p, rng);
    append(encoder);
    append(*mae_dec);
  } else if (alg == "supervised") {
    classifier = std::make_unique<Classifier>(fd, static_cast<int>(data.class_names.size()), rng);
    weights = class_weights(data).weights;
    append(encoder);
    append(*classifier);
  } else {
    throw ValidationError("unknown pretraining algorithm '" + alg + "'");
  }
  encoder.train();
  AdamW opt(params, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  RunRecord rec;
  rec.kind = "pretrain";
  rec.task = alg;
  rec.metric = "train_loss";
  rec.higher_is_better = false;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    int steps = 0;
    auto batches = make_batches(pool, logical, derive_seed(cfg.seed, 0x9a7, epoch));
    for (auto& ids : batches) {
      if (static_cast<int>(ids.size()) < logical) continue;  // incomplete tail batch
      ids.resize(static_cast<std::size_t>(logical));
      Tensor loss;
      if (alg == "mocov3" || alg == "barlow") {
        std::vector<Image> v1, v2;
        for (int idx : ids) {
          ViewPair vp = make_view_pair(images[static_cast<std::size_t>(idx)],
                                       derive_seed(cfg.seed, 0x7e3, epoch, static_cast<std::uint64_t>(idx)), aug);
          v1.push_back(std::move(vp.x1));
          v2.push_back(std::move(vp.x2));
        }
        const Tensor x1 = to_batch(v1), x2 = to_batch(v2);
        // The whole logical batch passes through each network once, which is
        // batch normalization synchronized across the simulated workers.
        if (alg == "mocov3") {
          const Tensor q1 = predictor->forward(online->forward(x1));
          const Tensor q2 = predictor->forward(online->forward(x2));
          Tensor k1, k2;
          {
            NoGradGuard ng;
            k1 = momentum->forward(x1);
            k2 = momentum->forward(x2);
          }
          const int w = ssl.workers, n = ssl.per_worker_batch;
          loss = mean_of(moco_v3_loss(shards(q1, w, n), shards(q2, w, n), shards(k1, w, n), shards(k2, w, n), ssl.tau));
        } else {
          const Tensor z1 = online->forward(x1);
          const Tensor z2 = online->forward(x2);
          std::vector<Tensor> n1, n2;
          for (const Tensor& s : shards(z1, ssl.workers, ssl.per_worker_batch)) n1.push_back(barlow_normalize(s));
          for (const Tensor& s : shards(z2, ssl.workers, ssl.per_worker_batch)) n2.push_back(barlow_normalize(s));
          loss = barlow_loss(n1, n2, ssl.lambda);
        }
      } else {
        std::vector<Image> xs;
        std::vector<int> labels;
        for (int idx : ids) {
          xs.push_back(preprocess_train(images[static_cast<std::size_t>(idx)], TaskKind::classification,
                                        derive_seed(cfg.seed, 0x7e4, epoch, static_cast<std::uint64_t>(idx)), aug)
                           .image);
          labels.push_back(data.records[static_cast<std::size_t>(idx)].label);
        }
        const Tensor x = to_batch(xs);
        if (alg == "mae") {
          const int n_p = vit->grid() * vit->grid();
          std::vector<MaskingPlan> plans;
          for (int idx : ids)
            plans.push_back(mae_mask(n_p, ssl.gamma, derive_seed(cfg.seed, 0x3ae, epoch, static_cast<std::uint64_t>(idx))));
          const Tensor pred = mae_dec->forward(vit->forward_masked(x, plans), plans);
          loss = mae_loss(pred, ops::patchify(x, vit->config().patch), plans);
        } else {
          loss = weighted_cross_entropy(classifier->forward(encoder.forward(x).pooled), labels, weights);
        }
      }
      ++steps;
      if (!std::isfinite(loss.item())) {
        std::vector<std::string> names;
        for (int idx : ids) names.push_back(data.records[static_cast<std::size_t>(idx)].id);
        abort_non_finite(checkpoint, epoch, steps, loss.item(), cfg.lr, names);
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
      if (ema) ema->update();
      loss_sum += loss.item();
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / std::max(1, steps);
    log.lr = cfg.lr;
    rec.epochs.push_back(log);
  }
  rec.best_epoch = cfg.epochs;
  rec.best_score = rec.epochs.back().train_loss;
  std::vector<nn::NamedTensor> state;
  for (auto& t : encoder.state()) state.push_back({"encoder." + t.name, t.tensor});
  ordered_json m = meta;
  m["epoch"] = cfg.epochs;
  save_checkpoint(checkpoint, m, state);
  rec.epochs.back().checkpointed = true;
  rec.checkpoint_id = checkpoint_id(checkpoint);
  rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace sslbench
