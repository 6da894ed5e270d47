#include "sslbench/config.hpp"

#include <charconv>
#include <set>
#include <sstream>

#include "sslbench/errors.hpp"
#include "sslbench/hash.hpp"
#include "sslbench/io.hpp"

namespace sslbench {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "task", "seed", "image.side", "data.manifest", "data.tag", "data.ratios",
      "encoder.arch", "encoder.stem", "encoder.widths", "encoder.blocks", "encoder.patch", "encoder.embed",
      "encoder.depth", "encoder.heads", "encoder.mlp_ratio", "encoder.window", "encoder.frozen_patch_embed",
      "ssl.algorithm", "ssl.tau", "ssl.lambda", "ssl.gamma", "ssl.momentum", "ssl.workers", "ssl.per_worker_batch",
      "pretraining.checkpoint", "pretraining.manifest", "pretraining.data", "pretraining.epochs",
      "train.batch", "train.lr", "train.weight_decay", "train.patience", "train.lr_floor", "train.epochs",
      "train.augment", "loss.grad_weight", "loss.grad_scales", "heads.seg_blocks", "heads.depth_blocks",
      "heads.dense_widths", "output.root"};
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config key " + key + ": expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ValidationError("config key " + key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config key " + key + ": expected true/false, got '" + v + "'");
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(static_cast<int>(to_int(key, trim(part))));
  require(!out.empty(), "config key " + key + ": empty list");
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::filesystem::path& dir) {
  ExperimentConfig c;
  c.dir_ = dir;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!known_keys().count(key)) throw ValidationError("config line " + std::to_string(n) + ": unknown key '" + key + "'");
    if (c.values_.count(key)) throw ValidationError("config line " + std::to_string(n) + ": duplicate key '" + key + "'");
    c.values_[key] = value;
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw ValidationError("config file not found: " + p.string());
  return parse(read_file(p), std::filesystem::absolute(p).parent_path());
}

std::string ExperimentConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::filesystem::path ExperimentConfig::path(const std::string& key) const {
  require(has(key), "config is missing " + key);
  std::filesystem::path p = values_.at(key);
  if (p.is_relative()) p = dir_ / p;
  p = p.lexically_normal();
  require(std::filesystem::exists(p), "config key " + key + ": path does not exist: " + p.string());
  return p;
}

std::string ExperimentConfig::canonical() const {
  std::string s;
  for (const auto& [k, v] : values_)
    if (k != "output.root") s += k + "=" + v + "\n";
  return s;
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a(canonical())); }

TaskKind ExperimentConfig::task() const {
  require(has("task"), "config is missing task");
  const TaskKind t = parse_task(get("task", ""));
  require(t != TaskKind::detection,
          "detection fine-tuning is out of scope; score detection prediction files with `evaluate`");
  return t;
}

std::uint64_t ExperimentConfig::seed() const {
  const long long s = to_int("seed", get("seed", "0"));
  require(s >= 0, "seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

EncoderConfig ExperimentConfig::encoder() const {
  EncoderConfig e;
  e.arch = get("encoder.arch", "conv");
  require(e.arch == "conv" || e.arch == "vit", "encoder.arch must be conv or vit");
  if (has("encoder.stem")) e.conv.stem = static_cast<int>(to_int("encoder.stem", get("encoder.stem", "")));
  if (has("encoder.widths")) e.conv.widths = to_ints("encoder.widths", get("encoder.widths", ""));
  if (has("encoder.blocks")) e.conv.blocks = static_cast<int>(to_int("encoder.blocks", get("encoder.blocks", "")));
  e.vit.image = augment().side;
  auto vi = [&](const char* key, int& field) {
    if (has(key)) field = static_cast<int>(to_int(key, get(key, "")));
  };
  vi("encoder.patch", e.vit.patch);
  vi("encoder.embed", e.vit.embed);
  vi("encoder.depth", e.vit.depth);
  vi("encoder.heads", e.vit.heads);
  vi("encoder.mlp_ratio", e.vit.mlp_ratio);
  vi("encoder.window", e.vit.window);
  if (has("encoder.frozen_patch_embed"))
    e.vit.frozen_patch_embed = to_bool("encoder.frozen_patch_embed", get("encoder.frozen_patch_embed", ""));
  return e;
}

SSLConfig ExperimentConfig::ssl() const {
  SSLConfig s;
  s.algorithm = get("ssl.algorithm", s.algorithm);
  if (has("ssl.tau")) s.tau = to_double("ssl.tau", get("ssl.tau", ""));
  if (has("ssl.lambda")) s.lambda = to_double("ssl.lambda", get("ssl.lambda", ""));
  if (has("ssl.gamma")) s.gamma = to_double("ssl.gamma", get("ssl.gamma", ""));
  if (has("ssl.momentum")) s.momentum = to_double("ssl.momentum", get("ssl.momentum", ""));
  if (has("ssl.workers")) s.workers = static_cast<int>(to_int("ssl.workers", get("ssl.workers", "")));
  if (has("ssl.per_worker_batch"))
    s.per_worker_batch = static_cast<int>(to_int("ssl.per_worker_batch", get("ssl.per_worker_batch", "")));
  return s;
}

TrainConfig ExperimentConfig::train() const {
  TrainConfig t;
  if (has("train.batch")) t.batch = static_cast<int>(to_int("train.batch", get("train.batch", "")));
  if (has("train.lr")) t.lr = to_double("train.lr", get("train.lr", ""));
  if (has("train.weight_decay")) t.weight_decay = to_double("train.weight_decay", get("train.weight_decay", ""));
  if (has("train.patience")) t.patience = static_cast<int>(to_int("train.patience", get("train.patience", "")));
  if (has("train.lr_floor")) t.lr_floor = to_double("train.lr_floor", get("train.lr_floor", ""));
  if (has("train.epochs")) t.epochs = static_cast<int>(to_int("train.epochs", get("train.epochs", "")));
  if (has("train.augment")) t.augment = to_bool("train.augment", get("train.augment", ""));
  if (has("loss.grad_weight")) t.ssi.grad_weight = to_double("loss.grad_weight", get("loss.grad_weight", ""));
  if (has("loss.grad_scales")) t.ssi.scales = static_cast<int>(to_int("loss.grad_scales", get("loss.grad_scales", "")));
  if (has("heads.seg_blocks")) t.heads.seg_blocks = static_cast<int>(to_int("heads.seg_blocks", get("heads.seg_blocks", "")));
  if (has("heads.depth_blocks"))
    t.heads.depth_blocks = static_cast<int>(to_int("heads.depth_blocks", get("heads.depth_blocks", "")));
  if (has("heads.dense_widths")) t.heads.dense_widths = to_ints("heads.dense_widths", get("heads.dense_widths", ""));
  t.seed = seed();
  t.validate();
  return t;
}

AugmentConfig ExperimentConfig::augment() const {
  AugmentConfig a;
  if (has("image.side")) a.side = static_cast<int>(to_int("image.side", get("image.side", "")));
  require(a.side >= 16, "image.side must be at least 16");
  return a;
}

std::array<double, 3> ExperimentConfig::ratios() const {
  std::array<double, 3> r{0.8, 0.1, 0.1};
  if (!has("data.ratios")) return r;
  std::stringstream ss(get("data.ratios", ""));
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    require(i < 3, "data.ratios needs three values");
    r[i++] = to_double("data.ratios", trim(part));
  }
  require(i == 3, "data.ratios needs three values");
  return r;
}

std::filesystem::path ExperimentConfig::output_root() const {
  if (!has("output.root")) return {};
  std::filesystem::path p = get("output.root", "");
  return p.is_relative() ? (dir_ / p).lexically_normal() : p;
}

}  // namespace sslbench
