#include "sslbench/checkpoint.hpp"

#include <algorithm>
#include <cstring>

#include "sslbench/errors.hpp"
#include "sslbench/hash.hpp"
#include "sslbench/io.hpp"

namespace sslbench {

namespace {
constexpr char kMagic[8] = {'S', 'S', 'L', 'B', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(T) > in.size()) throw RuntimeError("corrupt checkpoint " + what + ": truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.tensor;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::ordered_json& meta,
                     const std::vector<nn::NamedTensor>& tensors) {
  nlohmann::ordered_json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::ordered_json::array();
  std::int64_t offset = 0;
  for (const auto& t : tensors) {
    header["tensors"].push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", offset}});
    offset += t.tensor.numel();
  }
  const std::string h = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  out.reserve(out.size() + static_cast<std::size_t>(offset) * sizeof(double));
  for (const auto& t : tensors)
    out.append(reinterpret_cast<const char*>(t.tensor.data()), static_cast<std::size_t>(t.tensor.numel()) * sizeof(double));
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  const std::string what = path.string();
  if (in.size() < sizeof kMagic || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0)
    throw RuntimeError("not a checkpoint: " + what);
  std::size_t pos = sizeof kMagic;
  const auto version = take<std::uint32_t>(in, pos, what);
  if (version != kVersion) throw RuntimeError("unsupported checkpoint version " + std::to_string(version) + ": " + what);
  const auto hlen = take<std::uint64_t>(in, pos, what);
  if (pos + hlen > in.size()) throw RuntimeError("corrupt checkpoint " + what + ": truncated header");
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(in.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeError("corrupt checkpoint " + what + ": " + e.what());
  }
  pos += hlen;
  const std::size_t payload = (in.size() - pos) / sizeof(double);
  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::ordered_json::object());
  for (const auto& e : header.at("tensors")) {
    const Shape shape = e.at("shape").get<Shape>();
    const auto off = e.at("offset").get<std::size_t>();
    const auto n = static_cast<std::size_t>(numel(shape));
    if (off + n > payload) throw RuntimeError("corrupt checkpoint " + what + ": tensor " + e.at("name").get<std::string>() + " out of range");
    std::vector<double> v(n);
    std::memcpy(v.data(), in.data() + pos + off * sizeof(double), n * sizeof(double));
    ck.tensors.push_back({e.at("name").get<std::string>(), Tensor::from(shape, std::move(v))});
  }
  return ck;
}

std::string checkpoint_id(const std::filesystem::path& path) { return hex64(fnv1a(read_file(path))); }

void load_module_state(const Checkpoint& ckpt, nn::Module& module, const std::string& prefix,
                       const std::vector<std::string>& skip) {
  for (auto& entry : module.state()) {
    if (std::find(skip.begin(), skip.end(), entry.name) != skip.end()) continue;
    const Tensor* src = ckpt.find(prefix + entry.name);
    if (!src) throw ValidationError("checkpoint is missing tensor " + prefix + entry.name);
    if (src->shape() != entry.tensor.shape())
      throw ValidationError("checkpoint tensor " + prefix + entry.name + " has shape " + shape_str(src->shape()) +
                            ", model expects " + shape_str(entry.tensor.shape()));
    std::copy(src->values().begin(), src->values().end(), entry.tensor.values().begin());
  }
}

}  // namespace sslbench
