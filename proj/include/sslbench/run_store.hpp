#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace sslbench {

// Advisory exclusive lock on <root>/.lock, held for the object's lifetime.
class StoreLock {
 public:
  explicit StoreLock(const std::filesystem::path& root);
  ~StoreLock();
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  int fd_ = -1;
};

// <root>/runs/<config hash>/{config.txt, checkpoint.bin, run_record.json,
// report.json, predictions/}; replaced runs move to <root>/archive/.
// A run is complete once run_record.json exists.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  // Explicit root, else $SSLBENCH_OUT, else the config's output.root, else
  // ./sslbench_out.
  static std::filesystem::path pick_root(const std::filesystem::path& explicit_root,
                                         const std::filesystem::path& config_root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path run_dir(const std::string& hash) const { return root_ / "runs" / hash; }
  bool completed(const std::string& hash) const;

  // Prepares an empty run directory. A completed run is refused unless
  // `force`, in which case it is archived first.
  std::filesystem::path begin(const std::string& hash, bool force);

  std::vector<std::string> completed_runs() const;

  // "run:<hash>" -> that run's checkpoint; anything else is a file path.
  std::filesystem::path resolve_checkpoint(const std::string& ref, const std::filesystem::path& base_dir) const;

 private:
  std::filesystem::path root_;
};

}  // namespace sslbench
