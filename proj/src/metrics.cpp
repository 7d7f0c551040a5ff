#include "maskpipe/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "maskpipe/error.hpp"
#include "maskpipe/labeling.hpp"

namespace maskpipe {

std::string_view to_string(NcMode mode) {
  return mode == NcMode::kDifferenceSet ? "difference_set" : "parent_labels";
}

std::string_view to_string(Weighting weighting) {
  return weighting == Weighting::kPooledFrames ? "pooled_frames"
                                               : "per_video_mean";
}

NcMode parse_nc_mode(std::string_view text) {
  if (text == "difference_set") return NcMode::kDifferenceSet;
  if (text == "parent_labels") return NcMode::kParentLabels;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown nc_t mode '" + std::string(text) + "'");
}

Weighting parse_weighting(std::string_view text) {
  if (text == "pooled_frames") return Weighting::kPooledFrames;
  if (text == "per_video_mean") return Weighting::kPerVideoMean;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown weighting '" + std::string(text) + "'");
}

double dice_t(const Mask& current, const Mask& previous) {
  require_same_size(current, previous);
  const auto denom = current.area() + previous.area();
  if (denom == 0) return 1.0;
  const auto inter = intersection_area(current, previous);
  return 2.0 * static_cast<double>(inter) / static_cast<double>(denom);
}

namespace {

int count_parent_components(const Mask& current, const Mask& new_pixels) {
  if (new_pixels.is_empty()) return 0;
  const auto labeled = label_components(current);
  const auto fresh = new_pixels.row_spans();
  std::vector<char> seen(static_cast<std::size_t>(labeled.component_count),
                         0);
  int count = 0;
  // Every new-pixel span lies inside exactly one span of `current`.
  std::size_t j = 0;
  for (const auto& s : fresh) {
    while (j < labeled.spans.size() &&
           (labeled.spans[j].y < s.y ||
            (labeled.spans[j].y == s.y && labeled.spans[j].x_end <= s.x_begin))) {
      ++j;
    }
    const int label = labeled.spans[j].label;
    if (!seen[label - 1]) {
      seen[label - 1] = 1;
      ++count;
    }
  }
  return count;
}

}  // namespace

int nc_t(const Mask& current, const Mask& previous, NcMode mode) {
  require_same_size(current, previous);
  const Mask fresh = difference(current, previous);
  if (mode == NcMode::kDifferenceSet) return count_components(fresh);
  return count_parent_components(current, fresh);
}

OverlapScores overlap_scores(const Mask& prediction,
                             const Mask& ground_truth) {
  require_same_size(prediction, ground_truth);
  const auto a = prediction.area();
  const auto b = ground_truth.area();
  if (a + b == 0) return {1.0, 1.0};
  const auto inter = intersection_area(prediction, ground_truth);
  const auto uni = a + b - inter;
  return {2.0 * static_cast<double>(inter) / static_cast<double>(a + b),
          static_cast<double>(inter) / static_cast<double>(uni)};
}

MetricSeries series_metrics(const VideoSequence& seq,
                            const std::optional<Mask>& ground_truth_first_frame,
                            NcMode mode) {
  if (seq.frames.size() < 2) {
    throw Error(ErrorCode::kTooShort,
                "video '" + seq.video_id + "' has fewer than 2 frames");
  }
  validate_sequence(seq);
  MetricSeries out;
  out.video_id = seq.video_id;
  out.dice_t.reserve(seq.frames.size() - 1);
  out.nc_t.reserve(seq.frames.size() - 1);

  Mask previous = seq.mask_or_empty(0);
  for (std::size_t i = 1; i < seq.frames.size(); ++i) {
    Mask current = seq.mask_or_empty(i);
    out.dice_t.push_back(dice_t(current, previous));
    out.nc_t.push_back(nc_t(current, previous, mode));
    previous = std::move(current);
  }

  if (ground_truth_first_frame) {
    const auto scores =
        overlap_scores(seq.mask_or_empty(0), *ground_truth_first_frame);
    out.first_frame_dice = scores.dice;
    out.first_frame_iou = scores.iou;
  }
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no values to aggregate");
  }
  // Shifted by the first value so constant inputs give exactly std 0.
  const double n = static_cast<double>(values.size());
  const double k = values.front();
  double sum = 0.0;
  for (const double v : values) sum += v - k;
  const double shift = sum / n;
  double ss = 0.0;
  for (const double v : values) ss += (v - k - shift) * (v - k - shift);
  return {k + shift, std::sqrt(ss / n)};
}

MetricSummary aggregate(std::span<const MetricSeries> series_list,
                        Weighting weighting) {
  if (series_list.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no metric series to aggregate");
  }
  MetricSummary s;
  s.video_count = static_cast<std::int64_t>(series_list.size());
  std::vector<double> dice, nc;
  std::vector<double> ff_dice, ff_iou;
  for (const auto& series : series_list) {
    s.frame_count += static_cast<std::int64_t>(series.dice_t.size());
    if (series.first_frame_dice) ff_dice.push_back(*series.first_frame_dice);
    if (series.first_frame_iou) ff_iou.push_back(*series.first_frame_iou);
    if (series.dice_t.empty()) continue;
    if (weighting == Weighting::kPooledFrames) {
      dice.insert(dice.end(), series.dice_t.begin(), series.dice_t.end());
      nc.insert(nc.end(), series.nc_t.begin(), series.nc_t.end());
    } else {
      dice.push_back(mean_std(series.dice_t).mean);
      const std::vector<double> nc_values(series.nc_t.begin(),
                                          series.nc_t.end());
      nc.push_back(mean_std(nc_values).mean);
    }
  }
  const auto d = mean_std(dice);
  const auto n = mean_std(nc);
  s.mean_dice_t = d.mean;
  s.std_dice_t = d.std;
  s.mean_nc_t = n.mean;
  s.std_nc_t = n.std;
  if (!ff_dice.empty()) s.first_frame_dice = mean_std(ff_dice);
  if (!ff_iou.empty()) s.first_frame_iou = mean_std(ff_iou);
  return s;
}

}  // namespace maskpipe
