#include "sslbench/run_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>

#include "sslbench/errors.hpp"

namespace sslbench {

namespace fs = std::filesystem;

StoreLock::StoreLock(const fs::path& root) {
  fs::create_directories(root);
  const fs::path p = root / ".lock";
  fd_ = ::open(p.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw RuntimeError("cannot open lock file " + p.string());
  if (::flock(fd_, LOCK_EX) != 0) {
    ::close(fd_);
    throw RuntimeError("cannot lock " + p.string());
  }
}

StoreLock::~StoreLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "runs"); }

fs::path RunStore::pick_root(const fs::path& explicit_root, const fs::path& config_root) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv("SSLBENCH_OUT"); env && *env) return env;
  if (!config_root.empty()) return config_root;
  return fs::current_path() / "sslbench_out";
}

bool RunStore::completed(const std::string& hash) const { return fs::exists(run_dir(hash) / "run_record.json"); }

fs::path RunStore::begin(const std::string& hash, bool force) {
  StoreLock lock(root_);
  const fs::path dir = run_dir(hash);
  if (completed(hash)) {
    if (!force)
      throw ValidationError("run " + hash + " already exists at " + dir.string() + " (use --force to rerun)");
    int n = 1;
    fs::path dest;
    do {
      dest = root_ / "archive" / (hash + "." + std::to_string(n++));
    } while (fs::exists(dest));
    fs::create_directories(dest.parent_path());
    fs::rename(dir, dest);
  } else if (fs::exists(dir)) {
    fs::remove_all(dir);  // leftovers of an interrupted run
  }
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> RunStore::completed_runs() const {
  std::vector<std::string> out;
  if (!fs::exists(root_ / "runs")) return out;
  for (const auto& e : fs::directory_iterator(root_ / "runs"))
    if (e.is_directory() && fs::exists(e.path() / "run_record.json")) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

fs::path RunStore::resolve_checkpoint(const std::string& ref, const fs::path& base_dir) const {
  if (ref.rfind("run:", 0) == 0) {
    const std::string hash = ref.substr(4);
    if (!completed(hash)) throw ValidationError("no completed run " + hash + " in " + root_.string());
    return run_dir(hash) / "checkpoint.bin";
  }
  fs::path p = ref;
  if (p.is_relative()) p = base_dir / p;
  if (!fs::exists(p)) throw ValidationError("checkpoint not found: " + p.string());
  return p;
}

}  // namespace sslbench
