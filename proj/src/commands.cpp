#include "sslbench/commands.hpp"

#include <algorithm>
#include <ostream>

#include "sslbench/checkpoint.hpp"
#include "sslbench/config.hpp"
#include "sslbench/errors.hpp"
#include "sslbench/hash.hpp"
#include "sslbench/io.hpp"
#include "sslbench/run_store.hpp"

namespace sslbench {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

DatasetManifest cmd_synth(const SyntheticSpec& spec, std::uint64_t seed, const fs::path& out, std::ostream& log) {
  DatasetManifest m = generate_synthetic_dataset(spec, seed, out);
  log << "synth: " << m.records.size() << " " << to_string(spec.task) << " records (" << spec.style << ") -> "
      << (out / "manifest.json").string() << "\n";
  return m;
}

namespace {

void check_tag(const std::string& data) {
  require(data == "domain" || data == "general", "data tag must be domain or general, got '" + data + "'");
}

json without_image(json d) {
  d.erase("image");
  return d;
}

void write_record(const fs::path& dir, const RunRecord& rec) { write_file(dir / "run_record.json", rec.to_json().dump(2) + "\n"); }

}  // namespace

RunOutcome cmd_pretrain(const fs::path& config_path, bool force, const fs::path& root, std::ostream& log) {
  const ExperimentConfig cfg = ExperimentConfig::load(config_path);
  const EncoderConfig enc_cfg = cfg.encoder();
  const SSLConfig ssl = cfg.ssl();
  if (ssl.algorithm == "mae" && enc_cfg.arch != "vit") throw ValidationError("MAE requires token encoder");
  const TrainConfig train = cfg.train();
  const AugmentConfig aug = cfg.augment();
  const std::string data_tag = cfg.get("data.tag", "domain");
  check_tag(data_tag);
  const fs::path manifest_path = cfg.path("data.manifest");
  const DatasetManifest manifest = load_manifest(manifest_path);
  validate_manifest(manifest);

  RunStore store(RunStore::pick_root(root, cfg.output_root()));
  RunOutcome out;
  out.hash = cfg.hash();
  out.dir = store.begin(out.hash, force);
  write_file(out.dir / "config.txt", cfg.canonical());
  log << "pretrain " << ssl.algorithm << " (" << enc_cfg.arch << ", " << data_tag << ") -> run " << out.hash << "\n";

  Rng rng(derive_seed(train.seed, 0x1417));
  auto encoder = make_encoder(enc_cfg, rng);
  ordered_json meta;
  meta["kind"] = "encoder";
  meta["algorithm"] = ssl.algorithm;
  meta["data"] = data_tag;
  meta["dataset_hash"] = dataset_hash(manifest);
  meta["seed"] = train.seed;
  meta["config_hash"] = out.hash;
  meta["encoder"] = ordered_json::parse(encoder->describe().dump());
  out.record = pretrain(train, ssl, enc_cfg, *encoder, manifest, aug, out.dir / "checkpoint.bin", meta);
  out.record.config_hash = out.hash;
  out.record.provenance = meta;
  write_record(out.dir, out.record);
  log << "  final loss " << out.record.epochs.back().train_loss << " (first " << out.record.epochs.front().train_loss
      << "), checkpoint " << out.record.checkpoint_id << "\n";
  return out;
}

RunOutcome cmd_finetune(const fs::path& config_path, bool force, const fs::path& root, std::ostream& log) {
  const ExperimentConfig cfg = ExperimentConfig::load(config_path);
  const TaskKind task = cfg.task();
  const EncoderConfig enc_cfg = cfg.encoder();
  const TrainConfig train_cfg = cfg.train();
  const AugmentConfig aug = cfg.augment();
  const fs::path manifest_path = cfg.path("data.manifest");
  const DatasetManifest manifest = load_manifest(manifest_path);
  validate_manifest(manifest);
  require(manifest.task_kind == task, "config task " + to_string(task) + " does not match the manifest task " +
                                          to_string(manifest.task_kind));
  const std::string pre = cfg.get("pretraining.checkpoint", "none");

  RunStore store(RunStore::pick_root(root, cfg.output_root()));
  fs::path pre_ckpt;
  if (pre != "none" && pre != "supervised-proxy") pre_ckpt = store.resolve_checkpoint(pre, cfg.dir());

  RunOutcome out;
  out.hash = cfg.hash();
  out.dir = store.begin(out.hash, force);
  write_file(out.dir / "config.txt", cfg.canonical());

  FinetuneInputs in;
  in.manifest = &manifest;
  in.augment = aug;
  const bool tagged = std::all_of(manifest.records.begin(), manifest.records.end(),
                                  [](const ImageSample& r) { return !r.split.empty(); });
  in.splits = tagged ? splits_from_tags(manifest) : split_dataset(manifest, cfg.ratios(), train_cfg.seed);
  in.samples = load_all(manifest);

  Rng rng(derive_seed(train_cfg.seed, 0x1417));
  auto encoder = make_encoder(enc_cfg, rng);
  PipelineTag tag{enc_cfg.arch, "none", "none"};
  ordered_json pre_prov;
  std::vector<std::string> flags;
  if (pre == "none") {
    pre_prov["source"] = "random initialization";
    flags.push_back("random initialization");
  } else {
    if (pre == "supervised-proxy") {
      const DatasetManifest proxy = load_manifest(cfg.path("pretraining.manifest"));
      validate_manifest(proxy);
      TrainConfig pt = train_cfg;
      if (cfg.has("pretraining.epochs")) pt.epochs = std::stoi(cfg.get("pretraining.epochs", "1"));
      SSLConfig ssl;
      ssl.algorithm = "supervised";
      const std::string data_tag = cfg.get("pretraining.data", "general");
      check_tag(data_tag);
      ordered_json meta{{"kind", "encoder"}, {"algorithm", "supervised"}, {"data", data_tag},
                        {"dataset_hash", dataset_hash(proxy)}, {"seed", pt.seed}, {"config_hash", out.hash},
                        {"encoder", ordered_json::parse(encoder->describe().dump())}};
      pre_ckpt = out.dir / "proxy_checkpoint.bin";
      log << "supervised-proxy pretraining on " << proxy.records.size() << " labelled images\n";
      pretrain(pt, ssl, enc_cfg, *encoder, proxy, aug, pre_ckpt, meta);
    }
    const Checkpoint ck = load_checkpoint(pre_ckpt);
    require(ck.meta.value("kind", "") == "encoder", "checkpoint " + pre_ckpt.string() + " is not an encoder checkpoint");
    require(without_image(json::parse(ck.meta.at("encoder").dump())) == without_image(encoder->describe()),
            "checkpoint encoder " + ck.meta.at("encoder").dump() + " does not match the configured encoder " +
                encoder->describe().dump());
    std::vector<std::string> skip;
    auto* vit = dynamic_cast<ViTEncoder*>(encoder.get());
    const Tensor* pos = ck.find("encoder.pos_embed");
    if (vit && pos && pos->shape() != vit->pos_embed.shape()) skip.push_back("pos_embed");
    load_module_state(ck, *encoder, "encoder.", skip);
    if (!skip.empty()) vit->load_pos_embed(*pos);
    tag.algorithm = ck.meta.at("algorithm").get<std::string>();
    tag.data = ck.meta.at("data").get<std::string>();
    pre_prov["source"] = pre == "supervised-proxy" ? "supervised-proxy" : "checkpoint";
    pre_prov["checkpoint_id"] = checkpoint_id(pre_ckpt);
    pre_prov["algorithm"] = tag.algorithm;
    pre_prov["data"] = tag.data;
    pre_prov["dataset_hash"] = ck.meta.value("dataset_hash", "");
    if (tag.algorithm == "supervised")
      flags.push_back("supervised-proxy pretraining on synthetic labels (stand-in for supervised generic pretraining)");
  }
  tag.validate();
  if (auto* vit = dynamic_cast<ViTEncoder*>(encoder.get())) vit->set_patch_embed_frozen(false);
  const int classes = static_cast<int>(manifest.class_names.size());
  TaskModel model(std::move(encoder), task, classes, train_cfg.heads, rng);
  log << "finetune " << to_string(task) << " " << tag.str() << " -> run " << out.hash << "\n";

  const std::string ds_hash = dataset_hash(manifest);
  ordered_json meta{{"kind", "task_model"}, {"task", to_string(task)}, {"config_hash", out.hash},
                    {"seed", train_cfg.seed}, {"dataset_hash", ds_hash}, {"pretraining", pre_prov}};
  out.record = train(train_cfg, model, in, out.dir / "checkpoint.bin", meta);
  out.record.config_hash = out.hash;

  require(!in.splits.test.empty(), "test split is empty");
  const fs::path preds = write_predictions(model, in, in.splits.test, train_cfg.batch, out.dir / "predictions");
  out.report = evaluate_predictions(preds, manifest, task);
  for (auto& f : flags) out.report.flags.push_back(f);
  if (out.record.degenerate_alignments > 0)
    out.report.flags.push_back("degenerate alignment during training on " +
                               std::to_string(out.record.degenerate_alignments) + " image(s)");
  ordered_json prov;
  prov["config_hash"] = out.hash;
  prov["seed"] = train_cfg.seed;
  prov["checkpoint_id"] = out.record.checkpoint_id;
  prov["dataset_hash"] = ds_hash;
  prov["pipeline"] = {{"arch", tag.arch}, {"data", tag.data}, {"algorithm", tag.algorithm}};
  prov["pretraining"] = pre_prov;
  prov["best_epoch"] = out.record.best_epoch;
  out.report.provenance = prov;
  out.record.provenance = prov;
  write_file(out.dir / "report.json", out.report.dump());
  write_record(out.dir, out.record);
  log << "  best " << out.record.metric << " " << out.record.best_score << " at epoch " << out.record.best_epoch
      << "; test " << primary_metric(task) << " " << out.report.metric(primary_metric(task)) << "\n";
  return out;
}

MetricReport cmd_evaluate(const fs::path& predictions, const fs::path& manifest_path, TaskKind task, const fs::path& out,
                          std::ostream& log) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  MetricReport rep = evaluate_predictions(predictions, manifest, task);
  rep.provenance["predictions_hash"] = hex64(fnv1a(read_file(predictions)));
  rep.provenance["dataset_hash"] = dataset_hash(manifest);
  const fs::path dest = out.empty() ? predictions.parent_path() / "report.json" : out;
  write_file(dest, rep.dump());
  for (const auto& [k, v] : rep.metrics) log << k << " = " << v << "\n";
  log << "report -> " << dest.string() << "\n";
  return rep;
}

AnalyzeOutcome cmd_analyze(const fs::path& root_in, const fs::path& out, const std::set<Comparison>& only,
                           std::ostream& log) {
  const fs::path root = RunStore::pick_root(root_in, {});
  require(fs::exists(root / "runs"), "no run store at " + root.string());
  RunStore store(root);
  std::vector<RunSummary> runs;
  for (const std::string& hash : store.completed_runs()) {
    const fs::path report = store.run_dir(hash) / "report.json";
    if (!fs::exists(report)) continue;  // pretraining runs carry no report
    RunSummary s;
    s.run_id = hash;
    s.report = MetricReport::from_json(json::parse(read_file(report)));
    const auto& p = s.report.provenance.at("pipeline");
    s.tag = {p.at("arch").get<std::string>(), p.at("data").get<std::string>(), p.at("algorithm").get<std::string>()};
    runs.push_back(std::move(s));
  }
  require(!runs.empty(), "no completed fine-tuning runs in " + root.string());
  AnalyzeOutcome res;
  res.result = analyze(runs);
  if (!only.empty())
    std::erase_if(res.result.rows, [&](const ComparisonRow& r) { return !only.count(r.kind); });
  for (const auto& e : res.result.excluded) log << "excluded " << e.run_id << " (" << e.tag << "): " << e.reason << "\n";
  res.files = write_analysis(res.result, out.empty() ? root / "analysis" : out);
  log << "analysis: " << runs.size() << " runs, " << res.result.rows.size() << " comparison rows, "
      << res.files.size() << " files\n";
  return res;
}

}  // namespace sslbench
