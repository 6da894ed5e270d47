#include <iostream>

#include <CLI11.hpp>

#include "sslbench/commands.hpp"
#include "sslbench/errors.hpp"
#include "sslbench/kernels.hpp"
#include "sslbench/sweep.hpp"

using namespace sslbench;

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised pretraining benchmark at desk scale"};
  app.require_subcommand(1);
  std::string out_root;
  app.add_option("--out", out_root, "Run store root (default: $SSLBENCH_OUT, config output.root, ./sslbench_out)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string task_name = "classification", style = "domain", synth_dir;
  SyntheticSpec spec;
  std::uint64_t seed = 0;
  synth->add_option("--task", task_name, "classification | detection | segmentation | depth")
      ->check(CLI::IsMember({"classification", "detection", "segmentation", "depth"}));
  synth->add_option("--n", spec.n, "Number of images")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--side", spec.side, "Image side in pixels")->check(CLI::Range(16, 1024));
  synth->add_option("--classes", spec.classes, "Classes (classification)")->check(CLI::Range(2, 16));
  synth->add_option("--style", style, "domain | general")->check(CLI::IsMember({"domain", "general"}));
  synth->add_option("--dir", synth_dir, "Output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "Pretrain an encoder from a config file");
  std::string config;
  bool force = false;
  pre->add_option("config", config, "Experiment config")->required();
  pre->add_flag("--force", force, "Archive an existing run with the same config hash and rerun");

  auto* fine = app.add_subcommand("finetune", "Fine-tune and test a task model from a config file");
  fine->add_option("config", config, "Experiment config")->required();
  fine->add_flag("--force", force, "Archive an existing run with the same config hash and rerun");

  auto* eval = app.add_subcommand("evaluate", "Score a JSON-lines prediction file");
  std::string predictions, manifest, report_out;
  eval->add_option("--predictions", predictions, "Prediction file (.jsonl)")->required();
  eval->add_option("--manifest", manifest, "Dataset manifest")->required();
  eval->add_option("--task", task_name, "Task of the predictions")
      ->required()
      ->check(CLI::IsMember({"classification", "detection", "segmentation", "depth"}));
  eval->add_option("--report", report_out, "Report path (default: report.json next to the predictions)");

  auto* an = app.add_subcommand("analyze", "Pair runs of a store and rank pipelines");
  std::string analysis_out;
  std::vector<std::string> only;
  an->add_option("--dir", analysis_out, "Output directory (default: <store>/analysis)");
  an->add_option("--only", only, "Restrict to comparisons: sl_to_ssl, in_to_hk, rn_to_vt")
      ->check(CLI::IsMember({"sl_to_ssl", "in_to_hk", "rn_to_vt"}));

  auto* sw = app.add_subcommand("sweep", "Run the desk-scale 12-pipeline sweep end to end");
  SweepSpec sweep;
  std::string sweep_root;
  sw->add_option("--root", sweep_root, "Working directory for data, configs and the run store")->required();
  sw->add_option("--seed", sweep.seed, "Seed");
  sw->add_option("--pretrain-epochs", sweep.pretrain_epochs)->check(CLI::PositiveNumber);
  sw->add_option("--finetune-epochs", sweep.finetune_epochs)->check(CLI::PositiveNumber);
  sw->add_option("--pretrain-images", sweep.pretrain_images)->check(CLI::Range(8, 100000));
  sw->add_option("--task-images", sweep.task_images)->check(CLI::Range(20, 100000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      spec.task = parse_task(task_name);
      spec.style = style;
      cmd_synth(spec, seed, synth_dir, std::cout);
    } else if (*pre) {
      cmd_pretrain(config, force, out_root, std::cout);
    } else if (*fine) {
      cmd_finetune(config, force, out_root, std::cout);
    } else if (*eval) {
      cmd_evaluate(predictions, manifest, parse_task(task_name), report_out, std::cout);
    } else if (*an) {
      std::set<Comparison> sel;
      for (const auto& o : only)
        sel.insert(o == "sl_to_ssl" ? Comparison::sl_to_ssl : o == "in_to_hk" ? Comparison::in_to_hk : Comparison::rn_to_vt);
      cmd_analyze(out_root, analysis_out, sel, std::cout);
    } else if (*sw) {
      sweep.root = sweep_root;
      run_sweep(sweep, std::cout);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
