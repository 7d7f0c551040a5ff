#pragma once

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskpipe/pipeline.hpp"

namespace maskpipe {

struct DetectionBox {
  Box box;
  double confidence = 0.0;
};

// IoU of inclusive-coordinate boxes.
double box_iou(const Box& a, const Box& b);

struct MatchResult {
  std::vector<bool> true_positive;  // in descending-confidence order
  std::vector<std::size_t> order;   // order[i] = input index of entry i
  int unmatched_gt = 0;
};

/// Greedy single-assignment matching: detections in descending confidence
/// (stable) each take the highest-IoU unmatched ground-truth box whose IoU
/// reaches `iou_threshold`.
MatchResult match_detections(std::span<const DetectionBox> dets,
                             std::span<const Box> gts, double iou_threshold);

enum class ApMode { kInterpolated101, kExactEnvelope };

/// AP from TP flags ordered by descending confidence.
///
/// kInterpolated101 averages the precision envelope at recall 0.00..1.00;
/// kExactEnvelope integrates the envelope over recall. With total_gt == 0
/// the result is 0 if anything was detected and 1 (vacuous) otherwise.
double average_precision(const std::vector<bool>& flags, int total_gt,
                         ApMode mode = ApMode::kInterpolated101);

struct FrameKey {
  std::string video_id;
  int frame = 0;

  auto operator<=>(const FrameKey&) const = default;
};

using FrameDetections = std::map<FrameKey, std::vector<DetectionBox>>;
using FrameGroundTruth = std::map<FrameKey, std::vector<Box>>;

// IoU thresholds 0.50, 0.55, ..., 0.95.
std::array<double, 10> coco_iou_thresholds();

struct EvalOptions {
  std::optional<double> confidence_cutoff;  // applies to precision/recall
  ApMode ap_mode = ApMode::kInterpolated101;
};

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  std::map<int, double> ap_per_threshold;  // key: threshold in hundredths
  double map_50 = 0.0;
  double map_50_95 = 0.0;
  double ap_95 = 0.0;
  int total_gt = 0;
  int total_detections = 0;
  int frames = 0;
  bool vacuous = false;  // no ground truth and no detections
};

// Frames in `dets` must also appear in `gts` (frames without objects carry
// an empty box list); otherwise kFrameMismatch.
EvalReport evaluate(const FrameDetections& dets, const FrameGroundTruth& gts,
                    const EvalOptions& options = {});

std::string eval_report_to_json(const EvalReport& report);

// Detection JSON-lines: {"video_id","frame","boxes":[{x1,y1,x2,y2,confidence}]}
FrameDetections read_detections_jsonl(std::string_view text);
std::string detections_to_jsonl(const FrameDetections& dets);

}  // namespace maskpipe
