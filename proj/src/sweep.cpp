#include "sslbench/sweep.hpp"

#include <algorithm>
#include <ostream>

#include "sslbench/config.hpp"
#include "sslbench/errors.hpp"
#include "sslbench/io.hpp"
#include "sslbench/run_store.hpp"

namespace sslbench {

namespace fs = std::filesystem;

std::vector<std::string> sweep_pipelines(const std::vector<std::string>& archs) {
  std::vector<std::string> out;
  for (const auto& arch : archs) {
    const std::vector<std::string> algs =
        arch == "conv" ? std::vector<std::string>{"mocov3", "barlow"} : std::vector<std::string>{"mocov3", "mae"};
    for (const auto& alg : algs)
      for (const char* data : {"domain", "general"}) out.push_back(arch + "/" + data + "/" + alg);
    out.push_back(arch + "/general/supervised");
    out.push_back(arch + "/none/none");
  }
  return out;
}

namespace {

std::string encoder_keys(const std::string& arch) {
  if (arch == "conv") return "encoder.arch = conv\nencoder.stem = 8\nencoder.widths = 8,16,32,64\nencoder.blocks = 1\n";
  return "encoder.arch = vit\nencoder.patch = 8\nencoder.embed = 32\nencoder.depth = 4\nencoder.heads = 4\n"
         "encoder.mlp_ratio = 2\n";
}

std::string common_keys(const SweepSpec& s) {
  return "seed = " + std::to_string(s.seed) + "\nimage.side = " + std::to_string(s.side) + "\n";
}

fs::path write_config(const SweepSpec& s, const std::string& name, const std::string& body) {
  const fs::path p = s.root / "configs" / (name + ".txt");
  write_file(p, body);
  return p;
}

std::string pipeline_name(const std::string& tag) {
  std::string n = tag;
  std::replace(n.begin(), n.end(), '/', '_');
  return n;
}

}  // namespace

SweepOutcome run_sweep(const SweepSpec& spec, std::ostream& log) {
  require(!spec.root.empty(), "sweep root is required");
  const fs::path data = spec.root / "data";
  const fs::path store_root = spec.root / "store";
  RunStore store(store_root);

  auto synth = [&](const std::string& name, TaskKind task, const std::string& style, int n, std::uint64_t tag) {
    const fs::path dir = data / name;
    if (!fs::exists(dir / "manifest.json")) {
      SyntheticSpec s;
      s.task = task;
      s.n = n;
      s.side = spec.side;
      s.style = style;
      cmd_synth(s, derive_seed(spec.seed, tag), dir, log);
    }
    return "../data/" + name + "/manifest.json";
  };
  const std::string domain_set = synth("pretrain_domain", TaskKind::classification, "domain", spec.pretrain_images, 1);
  const std::string general_set = synth("pretrain_general", TaskKind::classification, "general", spec.pretrain_images, 2);
  std::vector<std::pair<TaskKind, std::string>> task_sets;
  for (TaskKind t : spec.tasks)
    task_sets.emplace_back(t, synth("task_" + to_string(t), t, "domain", spec.task_images, 10 + static_cast<int>(t)));

  auto selected = [&](const std::string& tag) {
    return spec.only_pipelines.empty() ||
           std::find(spec.only_pipelines.begin(), spec.only_pipelines.end(), tag) != spec.only_pipelines.end();
  };

  SweepOutcome out;
  for (const std::string& tag : sweep_pipelines(spec.archs)) {
    if (!selected(tag)) continue;
    const std::string arch = tag.substr(0, tag.find('/'));
    const std::string data_tag = tag.substr(arch.size() + 1, tag.rfind('/') - arch.size() - 1);
    const std::string alg = tag.substr(tag.rfind('/') + 1);
    std::string pre_ref = "none";
    if (alg != "none") {
      std::string body = common_keys(spec) + encoder_keys(arch);
      body += "ssl.algorithm = " + alg + "\n";
      body += "data.manifest = " + (data_tag == "domain" ? domain_set : general_set) + "\n";
      body += "data.tag = " + data_tag + "\n";
      body += "train.epochs = " + std::to_string(spec.pretrain_epochs) + "\ntrain.batch = 8\ntrain.lr = 1e-3\n";
      if (alg == "mocov3" || alg == "barlow") body += "ssl.workers = 2\nssl.per_worker_batch = 4\n";
      if (alg == "mocov3" && arch == "vit") body += "encoder.frozen_patch_embed = true\n";
      const fs::path cfg = write_config(spec, "pretrain_" + pipeline_name(tag), body);
      const std::string hash = ExperimentConfig::load(cfg).hash();
      if (!store.completed(hash)) cmd_pretrain(cfg, false, store_root, log);
      pre_ref = "run:" + hash;
    }
    for (const auto& [task, set] : task_sets) {
      std::string body = common_keys(spec) + encoder_keys(arch);
      body += "task = " + to_string(task) + "\n";
      body += "data.manifest = " + set + "\n";
      body += "pretraining.checkpoint = " + pre_ref + "\n";
      body += "train.epochs = " + std::to_string(spec.finetune_epochs) + "\ntrain.batch = 8\ntrain.lr = 1e-3\n";
      const fs::path cfg = write_config(spec, "finetune_" + to_string(task) + "_" + pipeline_name(tag), body);
      const std::string hash = ExperimentConfig::load(cfg).hash();
      if (store.completed(hash)) {
        RunOutcome r;
        r.hash = hash;
        r.dir = store.run_dir(hash);
        r.report = MetricReport::from_json(nlohmann::json::parse(read_file(r.dir / "report.json")));
        out.finetunes.push_back(std::move(r));
      } else {
        out.finetunes.push_back(cmd_finetune(cfg, false, store_root, log));
      }
    }
  }
  out.analysis = cmd_analyze(store_root, store_root / "analysis", {}, log);
  return out;
}

}  // namespace sslbench
