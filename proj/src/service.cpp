#include "maskpipe/service.hpp"

#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "maskpipe/error.hpp"
#include "maskpipe/fileutil.hpp"
#include "maskpipe/mask_io.hpp"
#include "maskpipe/metrics_io.hpp"
#include "maskpipe/workspace.hpp"

namespace maskpipe {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

void send_error(httplib::Response& res, int status, std::string_view code,
                const std::string& message) {
  ordered_json j;
  j["error"] = std::string(code);
  j["message"] = message;
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kFormat:
      return 400;
    case ErrorCode::kOutOfBounds:
    case ErrorCode::kInvalidPrompt:
      return 422;
    default:
      return 500;
  }
}

struct CachedSequence {
  fs::file_time_type mtime;
  std::uintmax_t size = 0;
  std::shared_ptr<const VideoSequence> seq;
};

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  Workspace ws;
  httplib::Server server;
  std::thread thread;
  int bound_port = 0;

  std::mutex cache_mu;
  std::map<std::string, CachedSequence> cache;

  std::mutex locks_mu;
  std::map<std::string, std::unique_ptr<std::mutex>> prompt_locks;

  explicit Impl(ServiceOptions o) : options(std::move(o)), ws(options.root) {
    // httplib's default also sets SO_REUSEPORT, which lets a second server
    // bind a port that is already listening.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
  }

  std::mutex& prompt_lock(const std::string& id) {
    std::lock_guard lock(locks_mu);
    auto& m = prompt_locks[id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
  }

  std::string checked_video(const std::string& id) const {
    if (!ws.has_video(id)) {
      throw Error(ErrorCode::kNotFound, "unknown video '" + id + "'");
    }
    return id;
  }

  std::shared_ptr<const VideoSequence> masks(const std::string& id) {
    const auto src = ws.masks_source(id);
    if (!src) {
      throw Error(ErrorCode::kNotFound, "video '" + id + "' has no masks");
    }
    std::error_code ec;
    const auto mtime = fs::last_write_time(*src, ec);
    const auto size = fs::is_regular_file(*src) ? fs::file_size(*src, ec) : 0;
    {
      std::lock_guard lock(cache_mu);
      auto it = cache.find(id);
      if (it != cache.end() && it->second.mtime == mtime &&
          it->second.size == size) {
        return it->second.seq;
      }
    }
    auto seq = std::make_shared<const VideoSequence>(ws.load_masks(id));
    std::lock_guard lock(cache_mu);
    cache[id] = {mtime, size, seq};
    return seq;
  }

  // Wraps a handler so library errors become JSON error bodies.
  template <class Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.code()), error_code_name(e.code()),
                   e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  void routes() {
    server.Get("/videos", guarded([this](const auto&, auto& res) {
      auto arr = ordered_json::array();
      for (const auto& id : ws.video_ids()) {
        const auto m = ws.read_meta(id);
        ordered_json j;
        j["video_id"] = m.video_id;
        j["frame_count"] = m.frame_count;
        j["width"] = m.width;
        j["height"] = m.height;
        arr.push_back(std::move(j));
      }
      res.set_content(arr.dump(), "application/json");
    }));

    server.Get(R"(/frames/([^/]+)/(\d+))", guarded([this](const auto& req, auto& res) {
      const auto id = checked_video(req.matches[1]);
      const int n = std::stoi(req.matches[2]);
      char stem[32];
      std::snprintf(stem, sizeof(stem), "frame_%06d", n);
      static const std::pair<const char*, const char*> kTypes[] = {
          {".png", "image/png"}, {".jpg", "image/jpeg"}, {".jpeg", "image/jpeg"}};
      for (const auto& [ext, type] : kTypes) {
        const auto p = ws.frames_dir(id) / (std::string(stem) + ext);
        if (fs::exists(p)) {
          res.set_content(read_text_file(p), type);
          return;
        }
      }
      throw Error(ErrorCode::kNotFound,
                  "no frame " + std::to_string(n) + " ingested for '" + id + "'");
    }));

    server.Get(R"(/masks/([^/]+)/(\d+))", guarded([this](const auto& req, auto& res) {
      const auto id = checked_video(req.matches[1]);
      const int n = std::stoi(req.matches[2]);
      const auto seq = masks(id);
      if (n < 1 || n > seq->frame_count() || !seq->frames[n - 1].mask) {
        throw Error(ErrorCode::kNotFound,
                    "no mask for frame " + std::to_string(n) + " of '" + id + "'");
      }
      const auto png = encode_mask_png(*seq->frames[n - 1].mask);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    }));

    server.Get(R"(/metrics/([^/]+))", guarded([this](const auto& req, auto& res) {
      const auto id = checked_video(req.matches[1]);
      const auto p = ws.series_json(id);
      if (!fs::exists(p)) {
        throw Error(ErrorCode::kNotFound, "metrics not computed for '" + id + "'");
      }
      res.set_content(read_text_file(p), "application/json");
    }));

    server.Get(R"(/suggest/([^/]+))", guarded([this](const auto& req, auto& res) {
      const auto id = checked_video(req.matches[1]);
      const auto p = ws.series_json(id);
      if (!fs::exists(p)) {
        throw Error(ErrorCode::kNotFound, "metrics not computed for '" + id + "'");
      }
      const auto series = series_from_json(read_text_file(p));
      ordered_json j;
      j["video_id"] = id;
      const auto frame = series.nc_t.empty()
                             ? std::nullopt
                             : select_reannotation_frame(series.nc_t,
                                                         options.selection);
      j["frame"] = frame ? ordered_json(*frame) : ordered_json(nullptr);
      res.set_content(j.dump(), "application/json");
    }));

    server.Get(R"(/prompts/([^/]+))", guarded([this](const auto& req, auto& res) {
      const auto id = checked_video(req.matches[1]);
      auto arr = ordered_json::array();
      const auto p = ws.prompts_path(id);
      if (fs::exists(p)) {
        std::lock_guard lock(prompt_lock(id));
        for (const auto& ps : read_prompts(p)) {
          arr.push_back(ordered_json::parse(prompt_to_json_line(ps)));
        }
      }
      res.set_content(arr.dump(), "application/json");
    }));

    server.Post("/prompts", guarded([this](const auto& req, auto& res) {
      post_prompts(req, res);
    }));

    if (options.ui_dir) {
      server.set_mount_point("/ui", options.ui_dir->string());
    }
  }

  void post_prompts(const httplib::Request& req, httplib::Response& res) {
    std::vector<PromptSet> prompts;
    {
      std::istringstream in(req.body);
      std::string line;
      while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        prompts.push_back(prompt_from_json(line));
      }
    }
    if (prompts.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "request body holds no prompt");
    }
    auto violations = ordered_json::array();
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      const auto& p = prompts[i];
      if (!ws.has_video(p.video_id)) {
        ordered_json v;
        v["index"] = i;
        v["video_id"] = p.video_id;
        v["unknown_video"] = true;
        violations.push_back(std::move(v));
        continue;
      }
      const auto meta = ws.read_meta(p.video_id);
      const auto check = check_prompt(p, meta.width, meta.height, meta.frame_count);
      if (check.ok()) continue;
      ordered_json v;
      v["index"] = i;
      v["video_id"] = p.video_id;
      v["points"] = check.points;
      v["boxes"] = check.boxes;
      v["no_content"] = check.no_content;
      v["bad_frame"] = check.bad_frame;
      violations.push_back(std::move(v));
    }
    if (!violations.empty()) {
      ordered_json j;
      j["error"] = std::string(error_code_name(ErrorCode::kOutOfBounds));
      j["message"] = "prompt validation failed; nothing was written";
      j["violations"] = std::move(violations);
      res.status = 422;
      res.set_content(j.dump(), "application/json");
      return;
    }
    std::map<std::string, std::string> appended;
    for (const auto& p : prompts) appended[p.video_id] += prompt_to_json_line(p) + "\n";
    for (const auto& [id, lines] : appended) {
      std::lock_guard lock(prompt_lock(id));
      const auto path = ws.prompts_path(id);
      std::string content = fs::exists(path) ? read_text_file(path) : "";
      if (!content.empty() && content.back() != '\n') content += '\n';
      write_file_atomic(path, content + lines);
    }
    ordered_json j;
    j["written"] = prompts.size();
    res.status = 201;
    res.set_content(j.dump(), "application/json");
  }
};

Service::Service(ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { stop(); }

void Service::start() {
  if (!impl_->ws.exists()) {
    throw Error(ErrorCode::kWorkspaceMissing,
                "no workspace at " + impl_->options.root.string() +
                    " (expected a videos/ directory; run ingest or synth first)");
  }
  impl_->routes();
  auto& o = impl_->options;
  if (o.port == 0) {
    impl_->bound_port = impl_->server.bind_to_any_port(o.host);
    if (impl_->bound_port <= 0) {
      throw Error(ErrorCode::kPortInUse, "cannot bind any port on " + o.host);
    }
  } else {
    if (!impl_->server.bind_to_port(o.host, o.port)) {
      throw Error(ErrorCode::kPortInUse,
                  "port " + std::to_string(o.port) + " on " + o.host +
                      " is unavailable");
    }
    impl_->bound_port = o.port;
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

int Service::port() const { return impl_->bound_port; }

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void Service::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace maskpipe
