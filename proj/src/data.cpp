#include "sslbench/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "sslbench/errors.hpp"
#include "sslbench/hash.hpp"
#include "sslbench/io.hpp"
#include "sslbench/rng.hpp"

namespace sslbench {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(TaskKind task) {
  switch (task) {
    case TaskKind::classification:
      return "classification";
    case TaskKind::detection:
      return "detection";
    case TaskKind::segmentation:
      return "segmentation";
    case TaskKind::depth:
      return "depth";
  }
  return "?";
}

TaskKind parse_task(const std::string& name) {
  if (name == "classification") return TaskKind::classification;
  if (name == "detection") return TaskKind::detection;
  if (name == "segmentation") return TaskKind::segmentation;
  if (name == "depth") return TaskKind::depth;
  throw ValidationError("unsupported task kind '" + name + "' (expected classification|detection|segmentation|depth)");
}

void validate_manifest(const DatasetManifest& m) {
  require(!m.records.empty(), "empty dataset");
  for (const auto& r : m.records) {
    require(!r.id.empty(), "manifest record without id");
    require(fs::exists(m.resolve(r.image)), "record " + r.id + ": image not found: " + r.image);
    switch (m.task_kind) {
      case TaskKind::classification:
        require(r.label >= 0 && r.label < static_cast<int>(m.class_names.size()),
                "record " + r.id + ": class index " + std::to_string(r.label) + " outside [0, " +
                    std::to_string(m.class_names.size()) + ")");
        break;
      case TaskKind::depth:
        require(fs::exists(m.resolve(r.lens)), "record " + r.id + ": lens mask not found: " + r.lens);
        [[fallthrough]];
      default:
        require(fs::exists(m.resolve(r.target)), "record " + r.id + ": target not found: " + r.target);
    }
    require(r.split.empty() || r.split == "train" || r.split == "val" || r.split == "test",
            "record " + r.id + ": unknown split tag '" + r.split + "'");
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.root = path.parent_path();
  try {
    m.task_kind = parse_task(j.at("task_kind").get<std::string>());
    if (j.contains("class_names")) m.class_names = j["class_names"].get<std::vector<std::string>>();
    for (const auto& jr : j.at("records")) {
      ImageSample r;
      r.id = jr.at("id").get<std::string>();
      r.image = jr.at("image").get<std::string>();
      const auto& t = jr.at("target");
      if (m.task_kind == TaskKind::classification) {
        r.label = t.get<int>();
      } else if (m.task_kind == TaskKind::depth) {
        r.target = t.at("depth").get<std::string>();
        r.lens = t.at("lens").get<std::string>();
      } else {
        r.target = t.get<std::string>();
      }
      if (jr.contains("split")) r.split = jr["split"].get<std::string>();
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
  }
  validate_manifest(m);
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  json j;
  j["version"] = 1;
  j["task_kind"] = to_string(m.task_kind);
  if (m.task_kind == TaskKind::classification) j["class_names"] = m.class_names;
  json records = json::array();
  for (const auto& r : m.records) {
    json jr;
    jr["id"] = r.id;
    jr["image"] = r.image;
    if (m.task_kind == TaskKind::classification)
      jr["target"] = r.label;
    else if (m.task_kind == TaskKind::depth)
      jr["target"] = {{"depth", r.target}, {"lens", r.lens}};
    else
      jr["target"] = r.target;
    if (!r.split.empty()) jr["split"] = r.split;
    records.push_back(std::move(jr));
  }
  j["records"] = std::move(records);
  write_file(path, j.dump(1) + "\n");
}

SplitManifest split_dataset(const DatasetManifest& m, std::array<double, 3> ratios, std::uint64_t seed) {
  require(!m.records.empty(), "empty dataset");
  require(ratios[0] > 0.0 && ratios[1] > 0.0 && ratios[2] > 0.0 &&
              std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) <= 1e-9,
          "invalid ratios");
  const int n = static_cast<int>(m.records.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5b117));
  rng.shuffle(std::span<int>(order));
  const int n_val = static_cast<int>(std::floor(ratios[1] * n));
  const int n_test = static_cast<int>(std::floor(ratios[2] * n));
  const int n_train = n - n_val - n_test;
  SplitManifest s;
  s.seed = seed;
  s.ratios = ratios;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

SplitManifest splits_from_tags(const DatasetManifest& m) {
  require(!m.records.empty(), "empty dataset");
  SplitManifest s;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const std::string& tag = m.records[i].split;
    require(!tag.empty(), "record " + m.records[i].id + " has no split tag");
    (tag == "train" ? s.train : tag == "val" ? s.val : s.test).push_back(static_cast<int>(i));
  }
  return s;
}

ClassWeights class_weights_from_counts(const std::vector<long>& counts) {
  require(!counts.empty(), "empty dataset");
  long total = 0;
  for (long c : counts) {
    require(c > 0, "empty class");
    total += c;
  }
  ClassWeights w;
  const double nc = static_cast<double>(counts.size());
  for (long c : counts) w.weights.push_back(static_cast<double>(total) / (static_cast<double>(c) * nc));
  return w;
}

ClassWeights class_weights(const DatasetManifest& m) {
  require(m.task_kind == TaskKind::classification, "class weights need a classification manifest");
  require(!m.records.empty(), "empty dataset");
  std::vector<long> counts(m.class_names.size(), 0);
  for (const auto& r : m.records) {
    require(r.label >= 0 && r.label < static_cast<int>(counts.size()), "class index out of range in " + r.id);
    ++counts[static_cast<std::size_t>(r.label)];
  }
  return class_weights_from_counts(counts);
}

std::vector<Box> read_boxes(const fs::path& path) {
  std::vector<Box> boxes;
  try {
    for (const auto& b : json::parse(read_file(path))) {
      require(b.size() == 4, "box must have four coordinates in " + path.string());
      boxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed box file " + path.string() + ": " + e.what());
  }
  return boxes;
}

void write_boxes(const fs::path& path, const std::vector<Box>& boxes) {
  json j = json::array();
  for (const auto& b : boxes) j.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
  write_file(path, j.dump() + "\n");
}

namespace {

Image binarize(Image img) {
  for (float& v : img.data) v = v >= 0.5f ? 1.0f : 0.0f;
  return img;
}

}  // namespace

LoadedSample load_sample(const DatasetManifest& m, std::size_t index) {
  require(index < m.records.size(), "record index out of range");
  const ImageSample& r = m.records[index];
  LoadedSample s;
  s.image = read_png(m.resolve(r.image));
  require(s.image.channels == 3, "image " + r.image + " is not RGB");
  s.label = r.label;
  switch (m.task_kind) {
    case TaskKind::classification:
      break;
    case TaskKind::detection:
      s.boxes = read_boxes(m.resolve(r.target));
      break;
    case TaskKind::segmentation:
      s.mask = binarize(read_png(m.resolve(r.target)));
      break;
    case TaskKind::depth:
      s.depth = read_png(m.resolve(r.target));
      s.lens = binarize(read_png(m.resolve(r.lens)));
      break;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic scenes

namespace {

struct Rgb {
  double r, g, b;
};

Rgb hue_shift(Rgb c, double turns) {
  // Rotation about the grey axis.
  const double a = 2.0 * std::numbers::pi * turns;
  const double cs = std::cos(a);
  const double sn = std::sin(a);
  const double k = (1.0 - cs) / 3.0;
  const double s3 = std::sqrt(1.0 / 3.0) * sn;
  const double m0 = cs + k;
  const double m1 = k - s3;
  const double m2 = k + s3;
  auto clamp = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return {clamp(m0 * c.r + m1 * c.g + m2 * c.b), clamp(m2 * c.r + m0 * c.g + m1 * c.b),
          clamp(m1 * c.r + m2 * c.g + m0 * c.b)};
}

void put(Image& img, int y, int x, Rgb c) {
  img.at(0, y, x) = static_cast<float>(std::clamp(c.r, 0.0, 1.0));
  img.at(1, y, x) = static_cast<float>(std::clamp(c.g, 0.0, 1.0));
  img.at(2, y, x) = static_cast<float>(std::clamp(c.b, 0.0, 1.0));
}

struct Shape2 {
  int kind;  // 0 ellipse, 1 rectangle, 2 triangle
  double cx, cy, rx, ry;
  bool contains(double px, double py) const {
    const double u = (px - cx) / rx;
    const double v = (py - cy) / ry;
    switch (kind) {
      case 1:
        return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
      case 2:
        // Upward triangle inscribed in the bounding rectangle.
        return v <= 1.0 && v >= -1.0 && std::abs(u) <= (v + 1.0) / 2.0;
      default:
        return u * u + v * v <= 1.0;
    }
  }
};

Rgb lesion_color(int cls) {
  static const Rgb base[3] = {{0.55, 0.10, 0.14}, {0.93, 0.86, 0.58}, {0.42, 0.24, 0.45}};
  Rgb c = base[cls % 3];
  if (cls >= 3) c = hue_shift(c, 0.13 * (cls / 3));
  return c;
}

double lesion_texture(int cls, int x, int y) {
  switch (cls % 3) {
    case 1:
      return 0.14 * std::sin(0.9 * x + 0.45 * y);
    case 2:
      return ((x / 3 + y / 3) % 2 == 0) ? 0.12 : -0.12;
    default:
      return 0.0;
  }
}

Rgb general_color(int cls) {
  static const Rgb base[3] = {{0.95, 0.75, 0.10}, {0.10, 0.55, 0.95}, {0.90, 0.20, 0.80}};
  Rgb c = base[cls % 3];
  if (cls >= 3) c = hue_shift(c, 0.11 * (cls / 3));
  return c;
}

// Background textures per style.
void paint_background(Image& img, const std::string& style, Rng& rng) {
  const int h = img.height;
  const int w = img.width;
  if (style == "general") {
    const Rgb a = hue_shift({0.15, 0.45, 0.25}, rng.uniform(-0.1, 0.1));
    const Rgb b = hue_shift({0.20, 0.30, 0.60}, rng.uniform(-0.1, 0.1));
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double t = 0.5 + 0.5 * ((x - w / 2.0) * ca + (y - h / 2.0) * sa) / (0.75 * std::max(h, w));
        const double n = rng.normal(0.0, 0.02);
        put(img, y, x, {a.r + t * (b.r - a.r) + n, a.g + t * (b.g - a.g) + n, a.b + t * (b.b - a.b) + n});
      }
    return;
  }
  const Rgb base{0.80 + rng.uniform(-0.05, 0.05), 0.45 + rng.uniform(-0.05, 0.05), 0.42 + rng.uniform(-0.05, 0.05)};
  const double f1 = rng.uniform(0.15, 0.35);
  const double f2 = rng.uniform(0.15, 0.35);
  const double p1 = rng.uniform(0.0, 6.3);
  const double p2 = rng.uniform(0.0, 6.3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = (x + 0.5) / w - 0.5;
      const double dy = (y + 0.5) / h - 0.5;
      const double vignette = 1.0 - 0.6 * (dx * dx + dy * dy);
      const double tex = 0.04 * std::sin(f1 * x + p1) + 0.04 * std::sin(f2 * y + p2) + rng.normal(0.0, 0.02);
      put(img, y, x, {(base.r + tex) * vignette, (base.g + tex) * vignette, (base.b + tex) * vignette});
    }
}

Shape2 random_shape(int kind, int h, int w, double min_frac, double max_frac, Rng& rng) {
  const int side = std::min(h, w);
  Shape2 s;
  s.kind = kind;
  s.rx = std::max(2.0, rng.uniform(min_frac, max_frac) * side);
  s.ry = std::max(2.0, rng.uniform(min_frac, max_frac) * side);
  s.cx = rng.uniform(s.rx + 1.0, w - s.rx - 1.0);
  s.cy = rng.uniform(s.ry + 1.0, h - s.ry - 1.0);
  return s;
}

// Rasterized pixel set of a shape, painted with its texture; returns the
// tight box of the pixels it covers.
Box draw_shape(Image& img, Image* mask, const Shape2& s, int cls, const std::string& style) {
  Box box{1e9, 1e9, -1e9, -1e9};
  const Rgb color = style == "general" ? general_color(cls) : lesion_color(cls);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (!s.contains(x + 0.5, y + 0.5)) continue;
      const double tex = style == "general" ? 0.0 : lesion_texture(cls, x, y);
      put(img, y, x, {color.r + tex, color.g + tex, color.b + tex});
      if (mask) mask->at(0, y, x) = 1.0f;
      box.x_min = std::min(box.x_min, static_cast<double>(x));
      box.y_min = std::min(box.y_min, static_cast<double>(y));
      box.x_max = std::max(box.x_max, static_cast<double>(x + 1));
      box.y_max = std::max(box.y_max, static_cast<double>(y + 1));
    }
  return box;
}

bool boxes_apart(const Shape2& a, const Shape2& b, double gap) {
  return a.cx + a.rx + gap < b.cx - b.rx || b.cx + b.rx + gap < a.cx - a.rx || a.cy + a.ry + gap < b.cy - b.ry ||
         b.cy + b.ry + gap < a.cy - a.ry;
}

void synth_depth(SyntheticSample& out, int side, Rng& rng) {
  const int w = side;
  const int h = std::max(1, side * 3 / 4);
  out.image = Image(3, h, w);
  out.depth = Image(1, h, w);
  out.lens = Image(1, h, w);
  const double cx = w / 2.0 + rng.uniform(-0.15, 0.15) * w;
  const double cy = h / 2.0 + rng.uniform(-0.15, 0.15) * h;
  const double spread = rng.uniform(0.3, 0.45);
  const double fold_phase = rng.uniform(0.0, 6.3);
  const double fold_amp = rng.uniform(0.01, 0.03);
  const double lens_r = 0.575 * std::min(h, w);
  const Rgb tint{0.85 + rng.uniform(-0.05, 0.05), 0.50 + rng.uniform(-0.05, 0.05), 0.45 + rng.uniform(-0.05, 0.05)};
  const double norm = 0.5 * std::max(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double lx = x + 0.5 - w / 2.0;
      const double ly = y + 0.5 - h / 2.0;
      const bool on_lens = lx * lx + ly * ly <= lens_r * lens_r;
      if (!on_lens) continue;
      out.lens.at(0, y, x) = 1.0f;
      const double r = std::hypot(x + 0.5 - cx, y + 0.5 - cy) / norm;
      double d = 0.08 + 0.85 * std::exp(-r * r / (2.0 * spread * spread)) + fold_amp * std::sin(18.0 * r + fold_phase);
      d = std::clamp(d, 0.0, 1.0);
      out.depth.at(0, y, x) = static_cast<float>(d);
      const double shade = std::pow(1.0 - 0.9 * d, 1.3) * (1.0 + 0.05 * std::sin(18.0 * r + fold_phase));
      const double n = rng.normal(0.0, 0.01);
      put(out.image, y, x, {tint.r * shade + n, tint.g * shade + n, tint.b * shade + n});
    }
}

std::string pad_id(int i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

}  // namespace

SyntheticSample synthesize_sample(const SyntheticSpec& spec, std::uint64_t seed, int index) {
  require(spec.side >= 8, "synthetic side must be at least 8 pixels");
  require(spec.classes >= 1, "synthetic class count must be at least 1");
  require(spec.style == "domain" || spec.style == "general", "unknown synthetic style '" + spec.style + "'");
  Rng rng(derive_seed(seed, 0xda7a, static_cast<std::uint64_t>(index)));
  SyntheticSample out;
  const int side = spec.side;
  if (spec.task == TaskKind::depth) {
    synth_depth(out, side, rng);
    return out;
  }
  out.image = Image(3, side, side);
  paint_background(out.image, spec.style, rng);
  const bool general = spec.style == "general";
  auto kind_for = [&](int cls) { return general ? cls % 3 : 0; };
  switch (spec.task) {
    case TaskKind::classification: {
      out.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.classes)));
      const Shape2 s = random_shape(kind_for(out.label), side, side, 0.15, 0.3, rng);
      draw_shape(out.image, nullptr, s, out.label, spec.style);
      break;
    }
    case TaskKind::segmentation: {
      out.mask = Image(1, side, side);
      const int count = 1 + static_cast<int>(rng.below(2));
      for (int i = 0; i < count; ++i) {
        const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.classes)));
        const Shape2 s = random_shape(kind_for(cls), side, side, 0.1, 0.25, rng);
        draw_shape(out.image, &out.mask, s, cls, spec.style);
      }
      break;
    }
    case TaskKind::detection: {
      out.mask = Image(1, side, side);
      const int want = 1 + static_cast<int>(rng.below(3));
      std::vector<Shape2> placed;
      for (int attempt = 0; attempt < 60 && static_cast<int>(placed.size()) < want; ++attempt) {
        const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.classes)));
        const Shape2 s = random_shape(kind_for(cls), side, side, 0.08, 0.2, rng);
        bool ok = true;
        for (const auto& p : placed) ok = ok && boxes_apart(s, p, 2.0);
        if (!ok) continue;
        placed.push_back(s);
        const Box b = draw_shape(out.image, &out.mask, s, cls, spec.style);
        if (b.x_max > b.x_min) out.boxes.push_back(b);
      }
      break;
    }
    default:
      throw ValidationError("unsupported task kind");
  }
  return out;
}

DatasetManifest generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed, const fs::path& dir) {
  require(spec.n >= 1, "synthetic dataset size must be at least 1");
  DatasetManifest m;
  m.task_kind = spec.task;
  m.root = dir;
  if (spec.task == TaskKind::classification) {
    static const char* general_names[3] = {"ellipse", "rectangle", "triangle"};
    for (int c = 0; c < spec.classes; ++c)
      m.class_names.push_back(spec.style == "general" && c < 3 ? std::string(general_names[c])
                                                               : "lesion_" + std::to_string(c));
  }
  fs::create_directories(dir / "images");
  for (int i = 0; i < spec.n; ++i) {
    const SyntheticSample s = synthesize_sample(spec, seed, i);
    ImageSample r;
    r.id = pad_id(i);
    r.image = "images/" + r.id + ".png";
    write_png_rgb8(dir / r.image, s.image);
    switch (spec.task) {
      case TaskKind::classification:
        r.label = s.label;
        break;
      case TaskKind::detection:
        r.target = "boxes/" + r.id + ".json";
        write_boxes(dir / r.target, s.boxes);
        break;
      case TaskKind::segmentation:
        fs::create_directories(dir / "masks");
        r.target = "masks/" + r.id + ".png";
        write_png_gray8(dir / r.target, s.mask);
        break;
      case TaskKind::depth:
        fs::create_directories(dir / "depth");
        fs::create_directories(dir / "lens");
        r.target = "depth/" + r.id + ".png";
        r.lens = "lens/" + r.id + ".png";
        write_png_gray16(dir / r.target, s.depth);
        write_png_gray8(dir / r.lens, s.lens);
        break;
    }
    m.records.push_back(std::move(r));
  }
  const SplitManifest split = split_dataset(m, spec.ratios, seed);
  for (int i : split.train) m.records[static_cast<std::size_t>(i)].split = "train";
  for (int i : split.val) m.records[static_cast<std::size_t>(i)].split = "val";
  for (int i : split.test) m.records[static_cast<std::size_t>(i)].split = "test";
  save_manifest(m, dir / "manifest.json");
  return m;
}

std::string dataset_hash(const DatasetManifest& m) {
  std::uint64_t h = kFnvOffset;
  h = fnv1a(to_string(m.task_kind), h);
  for (const auto& name : m.class_names) h = fnv1a(name + "\n", h);
  for (const auto& r : m.records) {
    h = fnv1a(r.id + "|" + std::to_string(r.label) + "|" + r.split + "\n", h);
    h = fnv1a(read_file(m.resolve(r.image)), h);
    if (!r.target.empty()) h = fnv1a(read_file(m.resolve(r.target)), h);
    if (!r.lens.empty()) h = fnv1a(read_file(m.resolve(r.lens)), h);
  }
  return hex64(h);
}

}  // namespace sslbench
