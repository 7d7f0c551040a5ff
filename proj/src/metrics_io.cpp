#include "maskpipe/metrics_io.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include <json.hpp>

#include "maskpipe/error.hpp"

namespace maskpipe {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string series_to_csv(std::span<const MetricSeries> series_list) {
  std::string out = "video_id,frame,dice_t,nc_t\n";
  for (const auto& s : series_list) {
    for (std::size_t i = 0; i < s.dice_t.size(); ++i) {
      out += s.video_id;
      out += ',';
      out += std::to_string(i + 2);
      out += ',';
      out += format_double(s.dice_t[i]);
      out += ',';
      out += std::to_string(s.nc_t[i]);
      out += '\n';
    }
  }
  return out;
}

std::vector<MetricSeries> series_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("video_id,frame,dice_t,nc_t", 0) != 0) {
    throw Error(ErrorCode::kFormat, "metrics CSV: missing header");
  }
  std::vector<MetricSeries> out;
  std::map<std::string, std::size_t> index;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, frame, dice, nc;
    if (!std::getline(row, id, ',') || !std::getline(row, frame, ',') ||
        !std::getline(row, dice, ',') || !std::getline(row, nc)) {
      throw Error(ErrorCode::kFormat,
                  "metrics CSV line " + std::to_string(lineno) + ": too few fields");
    }
    auto [it, inserted] = index.emplace(id, out.size());
    if (inserted) out.push_back(MetricSeries{id, {}, {}, {}, {}});
    auto& s = out[it->second];
    try {
      if (std::stoi(frame) != static_cast<int>(s.dice_t.size()) + 2) {
        throw Error(ErrorCode::kFormat, "frames out of order");
      }
      s.dice_t.push_back(std::stod(dice));
      s.nc_t.push_back(std::stoi(nc));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kFormat,
                  "metrics CSV line " + std::to_string(lineno) + ": bad number");
    } catch (const Error& e) {
      throw Error(e.code(),
                  "metrics CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

namespace {

ordered_json optional_number(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

}  // namespace

std::string summary_to_json(const MetricSeries& series) {
  const std::vector<double> dice(series.dice_t.begin(), series.dice_t.end());
  const std::vector<double> nc(series.nc_t.begin(), series.nc_t.end());
  const auto d = mean_std(dice);
  const auto n = mean_std(nc);
  ordered_json j;
  j["video_id"] = series.video_id;
  j["mean_dice_t"] = d.mean;
  j["std_dice_t"] = d.std;
  j["mean_nc_t"] = n.mean;
  j["std_nc_t"] = n.std;
  j["first_frame_dice"] = optional_number(series.first_frame_dice);
  j["first_frame_iou"] = optional_number(series.first_frame_iou);
  return j.dump(2) + "\n";
}

std::string series_to_json(const MetricSeries& series, NcMode mode) {
  ordered_json j;
  j["video_id"] = series.video_id;
  j["nc_t_mode"] = std::string(to_string(mode));
  auto frames = ordered_json::array();
  for (std::size_t i = 0; i < series.dice_t.size(); ++i) frames.push_back(i + 2);
  j["frames"] = std::move(frames);
  j["dice_t"] = series.dice_t;
  j["nc_t"] = series.nc_t;
  j["first_frame_dice"] = optional_number(series.first_frame_dice);
  j["first_frame_iou"] = optional_number(series.first_frame_iou);
  return j.dump() + "\n";
}

MetricSeries series_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricSeries s;
    s.video_id = j.at("video_id").get<std::string>();
    s.dice_t = j.at("dice_t").get<std::vector<double>>();
    s.nc_t = j.at("nc_t").get<std::vector<int>>();
    if (s.dice_t.size() != s.nc_t.size()) {
      throw Error(ErrorCode::kFormat, "dice_t and nc_t lengths differ");
    }
    if (j.contains("first_frame_dice") && !j["first_frame_dice"].is_null()) {
      s.first_frame_dice = j["first_frame_dice"].get<double>();
    }
    if (j.contains("first_frame_iou") && !j["first_frame_iou"].is_null()) {
      s.first_frame_iou = j["first_frame_iou"].get<double>();
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed series JSON: ") + e.what());
  }
}

}  // namespace maskpipe
