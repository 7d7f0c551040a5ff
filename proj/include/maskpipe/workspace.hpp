#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "maskpipe/metrics.hpp"
#include "maskpipe/pipeline.hpp"

namespace maskpipe {

enum class MaskFormat { kJsonl, kPng };

std::string_view to_string(MaskFormat format);
MaskFormat parse_mask_format(std::string_view text);

struct Config {
  std::filesystem::path root;
  MaskFormat mask_format = MaskFormat::kJsonl;
  NcMode nc_mode = NcMode::kDifferenceSet;
  Weighting weighting = Weighting::kPooledFrames;
  SelectionMode selection = SelectionMode::kMaxIncrease;
  SplitRatios split_ratios = default_split_ratios();
  int sample_k = 5;
  int port = 8080;
  // Run through the shell with {input} and {output_dir} substituted.
  std::string extract_command;
  int jobs = 1;
};

// Flag value, else $MASKPIPE_WORKSPACE, else the current directory.
std::filesystem::path resolve_workspace_root(
    const std::optional<std::string>& flag);

// Defaults overlaid with <root>/maskpipe.json when it exists.
Config load_config(const std::filesystem::path& root);
void validate_config(const Config& cfg);

// Video ids become directory names: [A-Za-z0-9._-]+, not "." or "..".
bool is_valid_video_id(std::string_view id);
void require_valid_video_id(std::string_view id);

struct VideoMeta {
  std::string video_id;
  int frame_count = 0;
  int width = 0;
  int height = 0;
  double fps = 0.0;
  int trimmed_leading = 0;
};

/// Filesystem layout of a pipeline workspace.
///
///   videos/<id>/{meta.json, masks.jsonl | masks/, gt_masks.jsonl,
///                gt_first_frame.jsonl, frames/}
///   metrics/<id>.{csv,summary.json,series.json}
///   prompts/<id>.jsonl   labels/<id>/frame_%06d.txt   detections/
///   suggestions.json prompt_frames.json split.json eval.json report.json
///   manifest.json
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path videos_dir() const { return root_ / "videos"; }
  std::filesystem::path video_dir(const std::string& id) const;
  std::filesystem::path meta_path(const std::string& id) const;
  std::filesystem::path masks_jsonl(const std::string& id) const;
  std::filesystem::path masks_png_dir(const std::string& id) const;
  std::filesystem::path gt_masks_path(const std::string& id) const;
  std::filesystem::path gt_first_frame_path(const std::string& id) const;
  std::filesystem::path frames_dir(const std::string& id) const;
  std::filesystem::path metrics_dir() const { return root_ / "metrics"; }
  std::filesystem::path series_csv(const std::string& id) const;
  std::filesystem::path summary_json(const std::string& id) const;
  std::filesystem::path series_json(const std::string& id) const;
  std::filesystem::path prompts_path(const std::string& id) const;
  std::filesystem::path labels_dir(const std::string& id) const;
  std::filesystem::path labels_root() const { return root_ / "labels"; }
  std::filesystem::path detections_dir() const { return root_ / "detections"; }
  std::filesystem::path suggestions_path() const {
    return root_ / "suggestions.json";
  }
  std::filesystem::path prompt_frames_path() const {
    return root_ / "prompt_frames.json";
  }
  std::filesystem::path split_path() const { return root_ / "split.json"; }
  std::filesystem::path eval_path() const { return root_ / "eval.json"; }
  std::filesystem::path report_path() const { return root_ / "report.json"; }
  std::filesystem::path manifest_path() const {
    return root_ / "manifest.json";
  }

  bool exists() const;
  // Sorted ids of videos that carry a meta.json.
  std::vector<std::string> video_ids() const;
  bool has_video(const std::string& id) const;

  VideoMeta read_meta(const std::string& id) const;
  void write_meta(const VideoMeta& meta) const;

  // The mask payload path that exists (JSONL preferred), or nullopt.
  std::optional<std::filesystem::path> masks_source(const std::string& id) const;
  VideoSequence load_masks(const std::string& id) const;
  std::optional<VideoSequence> load_ground_truth(const std::string& id) const;
  std::optional<Mask> load_first_frame_ground_truth(const std::string& id) const;

 private:
  std::filesystem::path root_;
};

std::string video_meta_to_json(const VideoMeta& meta);
VideoMeta video_meta_from_json(std::string_view text);

}  // namespace maskpipe
