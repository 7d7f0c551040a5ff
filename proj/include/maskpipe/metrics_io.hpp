#pragma once

#include <span>
#include <string>
#include <string_view>

#include "maskpipe/metrics.hpp"

namespace maskpipe {

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// "video_id,frame,dice_t,nc_t" header plus one row per frame pair; frame is
// the current frame of the pair, so rows start at 2.
std::string series_to_csv(std::span<const MetricSeries> series_list);
std::vector<MetricSeries> series_from_csv(std::string_view text);

// Per-video summary object; first-frame scores are null when absent.
std::string summary_to_json(const MetricSeries& series);

// Full series for the HTTP service and the report stage.
std::string series_to_json(const MetricSeries& series, NcMode mode);
MetricSeries series_from_json(std::string_view text);

}  // namespace maskpipe
