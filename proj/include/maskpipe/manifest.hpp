#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace maskpipe {

std::string sha256_hex(std::string_view bytes);

// Digest of a file, or of a directory tree (sorted relative paths plus file
// digests). Temporary files ending in ".tmp.*" are ignored. Missing paths
// digest to "absent".
std::string digest_path(const std::filesystem::path& path);

struct PathDigest {
  std::string path;  // relative to the manifest root when inside it
  std::string digest;
};

struct StageRecord {
  std::string name;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  std::vector<PathDigest> inputs;   // digested before the stage ran
  std::vector<PathDigest> outputs;  // digested after it finished
  std::string started_at;
  std::string finished_at;
};

// UTC ISO-8601. Honours SOURCE_DATE_EPOCH so reruns can be byte-identical.
std::string timestamp_now();

/// Append-only log of pipeline stages with content digests.
class RunManifest {
 public:
  explicit RunManifest(std::filesystem::path root) : root_(std::move(root)) {}

  static RunManifest load(const std::filesystem::path& root,
                          const std::filesystem::path& file);

  const std::filesystem::path& root() const { return root_; }
  const std::vector<StageRecord>& stages() const { return stages_; }

  std::string relative(const std::filesystem::path& p) const;
  std::filesystem::path resolve(const std::string& recorded) const;

  PathDigest digest(const std::filesystem::path& p) const;
  void append(StageRecord stage) { stages_.push_back(std::move(stage)); }

  std::string to_json() const;

  // Paths whose most recently recorded digest no longer matches the disk.
  std::vector<std::string> verify() const;

 private:
  std::filesystem::path root_;
  std::vector<StageRecord> stages_;
};

// Appends one stage to `file` (read-modify-write under a process-wide lock;
// single writer).
void append_stage(const std::filesystem::path& root,
                  const std::filesystem::path& file, StageRecord stage);

}  // namespace maskpipe
