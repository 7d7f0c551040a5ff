#include "maskpipe/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "maskpipe/error.hpp"
#include "maskpipe/fileutil.hpp"
#include "maskpipe/random.hpp"

namespace maskpipe {

using ordered_json = nlohmann::ordered_json;

TrimResult trim_leading_empty(const VideoSequence& seq) {
  TrimResult out;
  out.sequence.video_id = seq.video_id;
  out.sequence.fps = seq.fps;
  out.sequence.width = seq.width;
  out.sequence.height = seq.height;
  std::size_t first = 0;
  while (first < seq.frames.size() &&
         (!seq.frames[first].mask || seq.frames[first].mask->is_empty())) {
    ++first;
  }
  out.removed = static_cast<int>(first);
  if (first == seq.frames.size()) {
    out.all_empty = true;
    return out;
  }
  for (std::size_t i = first; i < seq.frames.size(); ++i) {
    FrameRecord rec = seq.frames[i];
    rec.frame_index = static_cast<int>(i - first) + 1;
    out.sequence.frames.push_back(std::move(rec));
  }
  return out;
}

std::vector<int> sample_prompt_frames(int total_frames, int k) {
  if (k < 1 || k > total_frames) {
    throw Error(ErrorCode::kInvalidK,
                "need 1 <= k <= total frames, got k=" + std::to_string(k) +
                    " total=" + std::to_string(total_frames));
  }
  const int step = total_frames / k;
  std::vector<int> frames(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) frames[i] = 1 + i * step;
  return frames;
}

std::string_view to_string(SelectionMode mode) {
  return mode == SelectionMode::kMaxIncrease ? "max_increase" : "max_value";
}

SelectionMode parse_selection_mode(std::string_view text) {
  if (text == "max_increase" || text == "delta") {
    return SelectionMode::kMaxIncrease;
  }
  if (text == "max_value" || text == "raw_max") return SelectionMode::kMaxValue;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown selection mode '" + std::string(text) + "'");
}

std::optional<int> select_reannotation_frame(std::span<const int> nc_series,
                                             SelectionMode mode) {
  if (nc_series.empty()) {
    throw Error(ErrorCode::kEmptySeries, "empty NC_t series");
  }
  std::optional<int> best_frame;
  long best = 0;
  for (std::size_t i = 0; i < nc_series.size(); ++i) {
    // Frame 2 has no predecessor value, so its increase counts as 0.
    const long score =
        mode == SelectionMode::kMaxValue
            ? nc_series[i]
            : (i == 0 ? 0L
                      : static_cast<long>(nc_series[i]) - nc_series[i - 1]);
    if (score > best) {
      best = score;
      best_frame = static_cast<int>(i) + 2;
    }
  }
  return best_frame;
}

std::optional<Box> bbox_from_mask(const Mask& mask) {
  if (mask.is_empty()) return std::nullopt;
  Box box{mask.width(), mask.height(), -1, -1};
  for (const auto& s : mask.row_spans()) {
    box.x1 = std::min(box.x1, s.x_begin);
    box.x2 = std::max(box.x2, s.x_end - 1);
    box.y1 = std::min(box.y1, s.y);
    box.y2 = std::max(box.y2, s.y);
  }
  return box;
}

DetectorLabel normalize_box(const Box& box, int width, int height) {
  const double w = width;
  const double h = height;
  return {0, (box.x1 + box.x2 + 1) / (2.0 * w),
          (box.y1 + box.y2 + 1) / (2.0 * h), (box.x2 - box.x1 + 1) / w,
          (box.y2 - box.y1 + 1) / h};
}

Box denormalize_label(const DetectorLabel& label, int width, int height) {
  const double bw = label.w * width;
  const double bh = label.h * height;
  Box box;
  box.x1 = static_cast<int>(std::llround(label.cx * width - bw / 2.0));
  box.y1 = static_cast<int>(std::llround(label.cy * height - bh / 2.0));
  box.x2 = box.x1 + static_cast<int>(std::llround(bw)) - 1;
  box.y2 = box.y1 + static_cast<int>(std::llround(bh)) - 1;
  return box;
}

std::string format_label_line(const DetectorLabel& label) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f", label.class_id,
                label.cx, label.cy, label.w, label.h);
  return buf;
}

DetectorLabel parse_label_line(std::string_view line) {
  std::istringstream in{std::string(line)};
  DetectorLabel label;
  if (!(in >> label.class_id >> label.cx >> label.cy >> label.w >> label.h)) {
    throw Error(ErrorCode::kFormat,
                "malformed label line '" + std::string(line) + "'");
  }
  return label;
}

std::string label_file_name(int frame_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.txt", frame_index);
  return buf;
}

int export_detector_labels(const VideoSequence& seq,
                           const std::filesystem::path& out_dir) {
  int written = 0;
  for (const auto& rec : seq.frames) {
    if (!rec.mask) continue;
    const auto box = bbox_from_mask(*rec.mask);
    if (!box) continue;
    const auto line =
        format_label_line(normalize_box(*box, seq.width, seq.height)) + "\n";
    write_file_atomic(out_dir / label_file_name(rec.frame_index), line);
    ++written;
  }
  return written;
}

SplitRatios default_split_ratios() {
  constexpr double kTrain = 212924, kVal = 56288, kTest = 36079;
  constexpr double kTotal = kTrain + kVal + kTest;
  return {kTrain / kTotal, kVal / kTotal, kTest / kTotal};
}

SplitRatios parse_split_ratios(std::string_view text) {
  std::vector<double> parts;
  std::string token;
  std::istringstream in{std::string(text)};
  while (std::getline(in, token, ',')) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (token.empty() || end != token.c_str() + token.size()) {
      throw Error(ErrorCode::kBadRatios,
                  "cannot parse ratios '" + std::string(text) + "'");
    }
    parts.push_back(v);
  }
  if (parts.size() != 3) {
    throw Error(ErrorCode::kBadRatios, "expected three ratios train,val,test");
  }
  return {parts[0], parts[1], parts[2]};
}

std::int64_t SplitManifest::frames_in(
    const std::vector<std::string>& ids) const {
  std::int64_t n = 0;
  for (const auto& id : ids) n += frame_counts.at(id);
  return n;
}

SplitManifest split_by_video(std::span<const VideoFrameCount> videos,
                             const SplitRatios& ratios, std::uint64_t seed) {
  const double r[3] = {ratios.train, ratios.val, ratios.test};
  for (const double v : r) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kBadRatios, "ratios must be non-negative");
    }
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw Error(ErrorCode::kBadRatios, "ratios must sum to 1");
  }
  const auto nonzero = std::count_if(std::begin(r), std::end(r),
                                     [](double v) { return v > 0.0; });
  if (static_cast<std::size_t>(nonzero) > videos.size()) {
    throw Error(ErrorCode::kTooFewVideos,
                "need at least " + std::to_string(nonzero) + " videos");
  }

  SplitManifest out;
  out.ratios_requested = ratios;
  out.seed = seed;
  std::int64_t total = 0;
  for (const auto& v : videos) {
    if (v.frame_count < 0) {
      throw Error(ErrorCode::kInvalidArgument, "negative frame count");
    }
    if (!out.frame_counts.emplace(v.video_id, v.frame_count).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate video id '" + v.video_id + "'");
    }
    total += v.frame_count;
  }

  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return videos[a].frame_count > videos[b].frame_count;
                   });

  const double tie_eps = 1e-9 * std::max<double>(1.0, total);
  double assigned[3] = {0, 0, 0};
  std::vector<std::string>* sets[3] = {&out.train, &out.val, &out.test};
  for (const auto idx : order) {
    int best = -1;
    double best_deficit = 0.0;
    for (int s = 0; s < 3; ++s) {
      if (r[s] <= 0.0) continue;
      const double deficit = r[s] * static_cast<double>(total) - assigned[s];
      if (best < 0 || deficit > best_deficit + tie_eps) {
        best = s;
        best_deficit = deficit;
      }
    }
    assigned[best] += static_cast<double>(videos[idx].frame_count);
    sets[best]->push_back(videos[idx].video_id);
  }
  for (auto* set : sets) std::sort(set->begin(), set->end());
  return out;
}

std::string split_manifest_to_json(const SplitManifest& m) {
  ordered_json j;
  j["train"] = m.train;
  j["val"] = m.val;
  j["test"] = m.test;
  ordered_json counts = ordered_json::object();
  for (const auto& [id, n] : m.frame_counts) counts[id] = n;
  j["frame_counts"] = counts;
  j["ratios_requested"] = {{"train", m.ratios_requested.train},
                           {"val", m.ratios_requested.val},
                           {"test", m.ratios_requested.test}};
  j["frames_assigned"] = {{"train", m.frames_in(m.train)},
                          {"val", m.frames_in(m.val)},
                          {"test", m.frames_in(m.test)}};
  j["seed"] = m.seed;
  return j.dump(2) + "\n";
}

SplitManifest split_manifest_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SplitManifest m;
    m.train = j.at("train").get<std::vector<std::string>>();
    m.val = j.at("val").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    for (const auto& [id, n] : j.at("frame_counts").items()) {
      m.frame_counts[id] = n.get<std::int64_t>();
    }
    const auto& r = j.at("ratios_requested");
    m.ratios_requested = {r.at("train").get<double>(),
                          r.at("val").get<double>(),
                          r.at("test").get<double>()};
    m.seed = j.value("seed", std::uint64_t{0});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat,
                std::string("malformed split manifest: ") + e.what());
  }
}

PromptViolations check_prompt(const PromptSet& prompt, int width, int height,
                              int frame_count) {
  PromptViolations v;
  for (std::size_t i = 0; i < prompt.points.size(); ++i) {
    const auto& p = prompt.points[i];
    if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height) {
      v.points.push_back(static_cast<int>(i));
    }
  }
  for (std::size_t i = 0; i < prompt.boxes.size(); ++i) {
    const auto& b = prompt.boxes[i];
    if (b.x1 < 0 || b.y1 < 0 || b.x2 >= width || b.y2 >= height ||
        b.x1 > b.x2 || b.y1 > b.y2) {
      v.boxes.push_back(static_cast<int>(i));
    }
  }
  v.no_content = prompt.points.empty() && prompt.boxes.empty();
  v.bad_frame = prompt.frame < 1 || (frame_count > 0 && prompt.frame > frame_count);
  return v;
}

std::string prompt_to_json_line(const PromptSet& prompt) {
  ordered_json j;
  j["video_id"] = prompt.video_id;
  j["frame"] = prompt.frame;
  ordered_json points = ordered_json::array();
  for (const auto& p : prompt.points) {
    ordered_json pj;
    pj["x"] = p.x;
    pj["y"] = p.y;
    pj["polarity"] = static_cast<int>(p.polarity);
    points.push_back(std::move(pj));
  }
  j["points"] = std::move(points);
  ordered_json boxes = ordered_json::array();
  for (const auto& b : prompt.boxes) {
    ordered_json bj;
    bj["x1"] = b.x1;
    bj["y1"] = b.y1;
    bj["x2"] = b.x2;
    bj["y2"] = b.y2;
    boxes.push_back(std::move(bj));
  }
  j["boxes"] = std::move(boxes);
  return j.dump();
}

PromptSet prompt_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    PromptSet p;
    p.video_id = j.at("video_id").get<std::string>();
    p.frame = j.at("frame").get<int>();
    for (const auto& pj : j.value("points", nlohmann::json::array())) {
      const int polarity = pj.at("polarity").get<int>();
      if (polarity != 0 && polarity != 1) {
        throw Error(ErrorCode::kInvalidPrompt, "polarity must be 0 or 1");
      }
      p.points.push_back({pj.at("x").get<int>(), pj.at("y").get<int>(),
                          static_cast<Polarity>(polarity)});
    }
    for (const auto& bj : j.value("boxes", nlohmann::json::array())) {
      p.boxes.push_back({bj.at("x1").get<int>(), bj.at("y1").get<int>(),
                         bj.at("x2").get<int>(), bj.at("y2").get<int>()});
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat,
                std::string("malformed prompt record: ") + e.what());
  }
}

int emit_prompts(std::span<const PromptSet> prompts,
                 const std::filesystem::path& out_path,
                 std::optional<FrameSize> frame_size) {
  if (frame_size) {
    for (const auto& p : prompts) {
      const auto v = check_prompt(p, frame_size->width, frame_size->height);
      if (!v.ok()) {
        throw Error(ErrorCode::kOutOfBounds,
                    "prompt for '" + p.video_id + "' frame " +
                        std::to_string(p.frame) + " is out of bounds");
      }
    }
  }
  std::string content;
  for (const auto& p : prompts) content += prompt_to_json_line(p) + "\n";
  write_file_atomic(out_path, content);
  return static_cast<int>(prompts.size());
}

std::vector<PromptSet> read_prompts(const std::filesystem::path& path) {
  std::vector<PromptSet> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prompt_from_json(line));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(lineno) +
                                ": " + e.what());
    }
  }
  return out;
}

}  // namespace maskpipe
