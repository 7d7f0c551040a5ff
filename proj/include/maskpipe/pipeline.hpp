#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskpipe/mask.hpp"

namespace maskpipe {

// Axis-aligned box, inclusive pixel coordinates.
struct Box {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  std::int64_t area() const {
    return static_cast<std::int64_t>(x2 - x1 + 1) * (y2 - y1 + 1);
  }
  bool operator==(const Box&) const = default;
};

// ---- frame filtering -------------------------------------------------------

struct TrimResult {
  VideoSequence sequence;
  int removed = 0;
  bool all_empty = false;
};

// Drops the leading run of empty/absent frames and renumbers from 1.
TrimResult trim_leading_empty(const VideoSequence& seq);

// ---- prompt frames ---------------------------------------------------------

// k frames uniformly spaced by floor(total / k), starting at frame 1.
std::vector<int> sample_prompt_frames(int total_frames, int k);

enum class SelectionMode { kMaxIncrease, kMaxValue };

std::string_view to_string(SelectionMode mode);
SelectionMode parse_selection_mode(std::string_view text);

/// Picks the frame to re-annotate from an NC_t series whose first element
/// belongs to frame 2.
///
/// kMaxIncrease maximises nc[n] - nc[n-1] (the first element's increase is
/// taken as 0); kMaxValue maximises nc[n]. Ties go to the earliest frame. Returns
/// nullopt when the best score is not positive.
std::optional<int> select_reannotation_frame(
    std::span<const int> nc_series,
    SelectionMode mode = SelectionMode::kMaxIncrease);

// ---- detector labels -------------------------------------------------------

// Tight box over every foreground pixel; nullopt for an empty mask.
std::optional<Box> bbox_from_mask(const Mask& mask);

struct DetectorLabel {
  int class_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

DetectorLabel normalize_box(const Box& box, int width, int height);
Box denormalize_label(const DetectorLabel& label, int width, int height);
// "class cx cy w h" with six decimals.
std::string format_label_line(const DetectorLabel& label);
DetectorLabel parse_label_line(std::string_view line);

std::string label_file_name(int frame_index);

// Writes frame_%06d.txt for every non-empty frame; returns the file count.
int export_detector_labels(const VideoSequence& seq,
                           const std::filesystem::path& out_dir);

// ---- dataset split ---------------------------------------------------------

struct VideoFrameCount {
  std::string video_id;
  std::int64_t frame_count = 0;
};

struct SplitRatios {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

// Frame fractions of the reference split (212,924 / 56,288 / 36,079 frames).
SplitRatios default_split_ratios();
SplitRatios parse_split_ratios(std::string_view text);

struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::map<std::string, std::int64_t> frame_counts;
  SplitRatios ratios_requested;
  std::uint64_t seed = 0;

  std::int64_t frames_in(const std::vector<std::string>& ids) const;
};

/// Assigns whole videos to train/val/test.
///
/// Videos are visited in descending frame count (equal counts in a seeded
/// shuffle order) and each goes to the set with the largest remaining frame
/// deficit against its target. Sets with a zero ratio never receive videos.
SplitManifest split_by_video(std::span<const VideoFrameCount> videos,
                             const SplitRatios& ratios, std::uint64_t seed);

std::string split_manifest_to_json(const SplitManifest& manifest);
SplitManifest split_manifest_from_json(std::string_view text);

// ---- prompts ---------------------------------------------------------------

enum class Polarity { kNegative = 0, kPositive = 1 };

struct PromptPoint {
  int x = 0;
  int y = 0;
  Polarity polarity = Polarity::kPositive;

  bool operator==(const PromptPoint&) const = default;
};

struct PromptSet {
  std::string video_id;
  int frame = 1;
  std::vector<PromptPoint> points;
  std::vector<Box> boxes;

  bool operator==(const PromptSet&) const = default;
};

struct PromptViolations {
  std::vector<int> points;  // indices of out-of-bounds points
  std::vector<int> boxes;   // indices of out-of-bounds or inverted boxes
  bool no_content = false;
  bool bad_frame = false;

  bool ok() const {
    return points.empty() && boxes.empty() && !no_content && !bad_frame;
  }
};

PromptViolations check_prompt(const PromptSet& prompt, int width, int height,
                              int frame_count = 0);

std::string prompt_to_json_line(const PromptSet& prompt);
PromptSet prompt_from_json(std::string_view text);

struct FrameSize {
  int width = 0;
  int height = 0;
};

// Writes one JSON line per prompt set. With a frame size every prompt is
// bounds-checked first and nothing is written on violation.
int emit_prompts(std::span<const PromptSet> prompts,
                 const std::filesystem::path& out_path,
                 std::optional<FrameSize> frame_size = std::nullopt);
std::vector<PromptSet> read_prompts(const std::filesystem::path& path);

}  // namespace maskpipe
