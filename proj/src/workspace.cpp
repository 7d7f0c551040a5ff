#include "maskpipe/workspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <json.hpp>

#include "maskpipe/error.hpp"
#include "maskpipe/fileutil.hpp"
#include "maskpipe/mask_io.hpp"

namespace maskpipe {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(MaskFormat format) {
  return format == MaskFormat::kJsonl ? "jsonl" : "png";
}

MaskFormat parse_mask_format(std::string_view text) {
  if (text == "jsonl") return MaskFormat::kJsonl;
  if (text == "png") return MaskFormat::kPng;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown mask format '" + std::string(text) + "'");
}

fs::path resolve_workspace_root(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("MASKPIPE_WORKSPACE"); env && *env) {
    return env;
  }
  return ".";
}

void validate_config(const Config& cfg) {
  if (cfg.sample_k < 1) {
    throw Error(ErrorCode::kInvalidArgument, "sample_k must be >= 1");
  }
  if (cfg.port < 0 || cfg.port > 65535) {
    throw Error(ErrorCode::kInvalidArgument, "port out of range");
  }
  if (cfg.jobs < 1) throw Error(ErrorCode::kInvalidArgument, "jobs must be >= 1");
  const auto& r = cfg.split_ratios;
  if (r.train < 0 || r.val < 0 || r.test < 0 ||
      std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::kBadRatios, "split ratios must sum to 1");
  }
}

Config load_config(const fs::path& root) {
  Config cfg;
  cfg.root = root;
  const auto file = root / "maskpipe.json";
  if (fs::exists(file)) {
    try {
      const auto j = nlohmann::json::parse(read_text_file(file));
      if (j.contains("mask_format")) {
        cfg.mask_format = parse_mask_format(j["mask_format"].get<std::string>());
      }
      if (j.contains("nc_mode")) {
        cfg.nc_mode = parse_nc_mode(j["nc_mode"].get<std::string>());
      }
      if (j.contains("weighting")) {
        cfg.weighting = parse_weighting(j["weighting"].get<std::string>());
      }
      if (j.contains("selection")) {
        cfg.selection = parse_selection_mode(j["selection"].get<std::string>());
      }
      if (j.contains("split_ratios")) {
        const auto& r = j["split_ratios"];
        if (r.is_string()) {
          cfg.split_ratios = parse_split_ratios(r.get<std::string>());
        } else {
          cfg.split_ratios = {r.at(0).get<double>(), r.at(1).get<double>(),
                              r.at(2).get<double>()};
        }
      }
      cfg.sample_k = j.value("sample_k", cfg.sample_k);
      cfg.port = j.value("port", cfg.port);
      cfg.extract_command = j.value("extract_command", cfg.extract_command);
      cfg.jobs = j.value("jobs", cfg.jobs);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormat, file.string() + ": " + e.what());
    }
  }
  validate_config(cfg);
  return cfg;
}

bool is_valid_video_id(std::string_view id) {
  if (id.empty() || id == "." || id == ".." || id.size() > 200) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
  });
}

void require_valid_video_id(std::string_view id) {
  if (!is_valid_video_id(id)) {
    throw Error(ErrorCode::kInvalidArgument,
                "invalid video id '" + std::string(id) +
                    "' (allowed: letters, digits, '.', '_', '-')");
  }
}

fs::path Workspace::video_dir(const std::string& id) const {
  require_valid_video_id(id);
  return videos_dir() / id;
}
fs::path Workspace::meta_path(const std::string& id) const {
  return video_dir(id) / "meta.json";
}
fs::path Workspace::masks_jsonl(const std::string& id) const {
  return video_dir(id) / "masks.jsonl";
}
fs::path Workspace::masks_png_dir(const std::string& id) const {
  return video_dir(id) / "masks";
}
fs::path Workspace::gt_masks_path(const std::string& id) const {
  return video_dir(id) / "gt_masks.jsonl";
}
fs::path Workspace::gt_first_frame_path(const std::string& id) const {
  return video_dir(id) / "gt_first_frame.jsonl";
}
fs::path Workspace::frames_dir(const std::string& id) const {
  return video_dir(id) / "frames";
}
fs::path Workspace::series_csv(const std::string& id) const {
  require_valid_video_id(id);
  return metrics_dir() / (id + ".csv");
}
fs::path Workspace::summary_json(const std::string& id) const {
  require_valid_video_id(id);
  return metrics_dir() / (id + ".summary.json");
}
fs::path Workspace::series_json(const std::string& id) const {
  require_valid_video_id(id);
  return metrics_dir() / (id + ".series.json");
}
fs::path Workspace::prompts_path(const std::string& id) const {
  require_valid_video_id(id);
  return root_ / "prompts" / (id + ".jsonl");
}
fs::path Workspace::labels_dir(const std::string& id) const {
  require_valid_video_id(id);
  return labels_root() / id;
}

bool Workspace::exists() const { return fs::is_directory(videos_dir()); }

std::vector<std::string> Workspace::video_ids() const {
  std::vector<std::string> ids;
  if (!exists()) return ids;
  for (const auto& e : fs::directory_iterator(videos_dir())) {
    const auto name = e.path().filename().string();
    if (e.is_directory() && is_valid_video_id(name) &&
        fs::exists(e.path() / "meta.json")) {
      ids.push_back(name);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool Workspace::has_video(const std::string& id) const {
  return is_valid_video_id(id) && fs::exists(meta_path(id));
}

std::string video_meta_to_json(const VideoMeta& meta) {
  ordered_json j;
  j["video_id"] = meta.video_id;
  j["frame_count"] = meta.frame_count;
  j["width"] = meta.width;
  j["height"] = meta.height;
  j["fps"] = meta.fps;
  j["trimmed_leading"] = meta.trimmed_leading;
  return j.dump(2) + "\n";
}

VideoMeta video_meta_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    VideoMeta m;
    m.video_id = j.at("video_id").get<std::string>();
    m.frame_count = j.at("frame_count").get<int>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.fps = j.value("fps", 0.0);
    m.trimmed_leading = j.value("trimmed_leading", 0);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed meta.json: ") + e.what());
  }
}

VideoMeta Workspace::read_meta(const std::string& id) const {
  const auto p = meta_path(id);
  if (!fs::exists(p)) {
    throw Error(ErrorCode::kNotFound, "no video '" + id + "' in workspace");
  }
  return video_meta_from_json(read_text_file(p));
}

void Workspace::write_meta(const VideoMeta& meta) const {
  write_file_atomic(meta_path(meta.video_id), video_meta_to_json(meta));
}

std::optional<fs::path> Workspace::masks_source(const std::string& id) const {
  if (fs::exists(masks_jsonl(id))) return masks_jsonl(id);
  if (fs::is_directory(masks_png_dir(id))) return masks_png_dir(id);
  return std::nullopt;
}

namespace {

// Pads a loaded sequence out to the recorded frame count (trailing frames
// without a record are absent) and restores metadata.
VideoSequence conform(VideoSequence seq, const VideoMeta& meta) {
  seq.video_id = meta.video_id;
  seq.fps = meta.fps;
  if (seq.width == 0) {
    seq.width = meta.width;
    seq.height = meta.height;
  }
  if (seq.width != meta.width || seq.height != meta.height) {
    throw Error(ErrorCode::kDimensionMismatch,
                "masks of '" + meta.video_id + "' do not match meta.json size");
  }
  while (seq.frame_count() < meta.frame_count) {
    seq.frames.push_back({seq.frame_count() + 1, std::nullopt, FrameSource::kModelOutput});
  }
  return seq;
}

}  // namespace

VideoSequence Workspace::load_masks(const std::string& id) const {
  const auto meta = read_meta(id);
  const auto src = masks_source(id);
  if (!src) {
    VideoSequence empty;
    return conform(std::move(empty), meta);
  }
  auto all = load_sequences(*src, id);
  auto it = all.find(id);
  VideoSequence seq = it == all.end() ? VideoSequence{} : std::move(it->second);
  return conform(std::move(seq), meta);
}

std::optional<VideoSequence> Workspace::load_ground_truth(
    const std::string& id) const {
  const auto p = gt_masks_path(id);
  if (!fs::exists(p)) return std::nullopt;
  const auto meta = read_meta(id);
  auto all = sequences_from_jsonl(read_text_file(p), FrameSource::kGroundTruth);
  auto it = all.find(id);
  VideoSequence seq = it == all.end() ? VideoSequence{} : std::move(it->second);
  return conform(std::move(seq), meta);
}

std::optional<Mask> Workspace::load_first_frame_ground_truth(
    const std::string& id) const {
  const auto p = gt_first_frame_path(id);
  if (!fs::exists(p)) return std::nullopt;
  auto all = sequences_from_jsonl(read_text_file(p), FrameSource::kGroundTruth);
  auto it = all.find(id);
  if (it == all.end() || it->second.frames.empty() ||
      !it->second.frames.front().mask) {
    throw Error(ErrorCode::kFormat, p.string() + " has no frame-1 mask");
  }
  return it->second.frames.front().mask;
}

}  // namespace maskpipe
