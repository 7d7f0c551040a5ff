#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "maskpipe/pipeline.hpp"

namespace maskpipe {

struct ServiceOptions {
  std::filesystem::path root;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::filesystem::path> ui_dir;
  SelectionMode selection = SelectionMode::kMaxIncrease;
};

/// HTTP surface over a workspace.
///
///   GET  /videos                  [{video_id, frame_count, width, height}]
///   GET  /frames/{video}/{n}      ingested frame image
///   GET  /masks/{video}/{n}       mask PNG (0/255)
///   GET  /metrics/{video}         series JSON, 404 until metrics ran
///   GET  /suggest/{video}         {"video_id", "frame": int|null}
///   POST /prompts                 one or more prompt JSON lines; 422 on any
///                                 violation with nothing written
///   GET  /prompts/{video}         stored prompt sets as a JSON array
///
/// Errors carry {"error": <code name>, "message": ...}.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and starts serving on a background thread. Throws
  // kWorkspaceMissing or kPortInUse.
  void start();
  int port() const;
  void stop();
  // Blocks until stop() (from another thread or a signal handler path).
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace maskpipe
