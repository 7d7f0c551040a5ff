#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskpipe/mask.hpp"

namespace maskpipe {

// How NC_t assigns component labels to newly appearing pixels.
//  kDifferenceSet: count 8-connected components of current \ previous.
//  kParentLabels:  count components of current that contain a new pixel.
enum class NcMode { kDifferenceSet, kParentLabels };

enum class Weighting { kPooledFrames, kPerVideoMean };

std::string_view to_string(NcMode mode);
std::string_view to_string(Weighting weighting);
NcMode parse_nc_mode(std::string_view text);
Weighting parse_weighting(std::string_view text);

/// Temporal Dice between consecutive frame masks. Both-empty pairs score 1.
double dice_t(const Mask& current, const Mask& previous);

/// Number of new connected components in `current` relative to `previous`.
int nc_t(const Mask& current, const Mask& previous,
         NcMode mode = NcMode::kDifferenceSet);

struct OverlapScores {
  double dice = 0.0;
  double iou = 0.0;
};

// Supervised overlap against a reference mask; both-empty scores (1, 1).
OverlapScores overlap_scores(const Mask& prediction, const Mask& ground_truth);

struct MetricSeries {
  std::string video_id;
  std::vector<double> dice_t;  // entry i compares frame i+2 with frame i+1
  std::vector<int> nc_t;
  std::optional<double> first_frame_dice;
  std::optional<double> first_frame_iou;
};

MetricSeries series_metrics(const VideoSequence& seq,
                            const std::optional<Mask>& ground_truth_first_frame,
                            NcMode mode = NcMode::kDifferenceSet);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

// Population mean and standard deviation; kEmptyInput on no values.
MeanStd mean_std(std::span<const double> values);

struct MetricSummary {
  double mean_dice_t = 0.0;
  double std_dice_t = 0.0;
  double mean_nc_t = 0.0;
  double std_nc_t = 0.0;
  std::int64_t frame_count = 0;  // number of consecutive-frame pairs pooled
  std::int64_t video_count = 0;
  // Across videos that carry first-frame ground truth.
  std::optional<MeanStd> first_frame_dice;
  std::optional<MeanStd> first_frame_iou;
};

MetricSummary aggregate(std::span<const MetricSeries> series_list,
                        Weighting weighting = Weighting::kPooledFrames);

}  // namespace maskpipe
