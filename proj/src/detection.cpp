#include "maskpipe/detection.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "maskpipe/error.hpp"

namespace maskpipe {

using ordered_json = nlohmann::ordered_json;

double box_iou(const Box& a, const Box& b) {
  const int ix1 = std::max(a.x1, b.x1);
  const int iy1 = std::max(a.y1, b.y1);
  const int ix2 = std::min(a.x2, b.x2);
  const int iy2 = std::min(a.y2, b.y2);
  if (ix2 < ix1 || iy2 < iy1) return 0.0;
  const auto inter = static_cast<std::int64_t>(ix2 - ix1 + 1) * (iy2 - iy1 + 1);
  const auto uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MatchResult match_detections(std::span<const DetectionBox> dets,
                             std::span<const Box> gts, double iou_threshold) {
  MatchResult out;
  out.order.resize(dets.size());
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dets[a].confidence > dets[b].confidence;
                   });
  std::vector<bool> gt_used(gts.size(), false);
  out.true_positive.reserve(dets.size());
  for (const auto idx : out.order) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g]) continue;
      const double iou = box_iou(dets[idx].box, gts[g]);
      if (iou >= iou_threshold && (best < 0 || iou > best_iou)) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    if (best >= 0) gt_used[best] = true;
    out.true_positive.push_back(best >= 0);
  }
  out.unmatched_gt = static_cast<int>(
      std::count(gt_used.begin(), gt_used.end(), false));
  return out;
}

double average_precision(const std::vector<bool>& flags, int total_gt,
                         ApMode mode) {
  if (total_gt <= 0) return flags.empty() ? 1.0 : 0.0;
  const std::size_t n = flags.size();
  std::vector<double> recall(n), envelope(n);
  std::int64_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += flags[i];
    recall[i] = static_cast<double>(tp) / total_gt;
    envelope[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) {
    envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
  }

  if (mode == ApMode::kExactEnvelope) {
    double area = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      area += (recall[i] - prev_recall) * envelope[i];
      prev_recall = recall[i];
    }
    return area;
  }

  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += envelope[it - recall.begin()];
  }
  return sum / 101.0;
}

std::array<double, 10> coco_iou_thresholds() {
  std::array<double, 10> t{};
  for (int i = 0; i < 10; ++i) t[i] = (50 + 5 * i) / 100.0;
  return t;
}

namespace {

struct PooledFlag {
  double confidence;
  std::size_t sequence;  // frame order, then input order within the frame
  bool tp;
};

struct Pooled {
  std::vector<bool> flags;
  int tp = 0;
  int detections = 0;
};

Pooled pool_frames(const FrameDetections& dets, const FrameGroundTruth& gts,
                   double threshold, std::optional<double> cutoff) {
  std::vector<PooledFlag> all;
  std::size_t sequence_base = 0;
  for (const auto& [key, gt_boxes] : gts) {
    const auto it = dets.find(key);
    if (it == dets.end()) continue;
    std::vector<DetectionBox> kept;
    for (const auto& d : it->second) {
      if (!cutoff || d.confidence >= *cutoff) kept.push_back(d);
    }
    const auto m = match_detections(kept, gt_boxes, threshold);
    for (std::size_t i = 0; i < m.order.size(); ++i) {
      all.push_back({kept[m.order[i]].confidence,
                     sequence_base + m.order[i], m.true_positive[i]});
    }
    sequence_base += kept.size();
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const PooledFlag& a, const PooledFlag& b) {
                     if (a.confidence != b.confidence) {
                       return a.confidence > b.confidence;
                     }
                     return a.sequence < b.sequence;
                   });
  Pooled out;
  out.flags.reserve(all.size());
  for (const auto& f : all) {
    out.flags.push_back(f.tp);
    out.tp += f.tp;
  }
  out.detections = static_cast<int>(all.size());
  return out;
}

}  // namespace

EvalReport evaluate(const FrameDetections& dets, const FrameGroundTruth& gts,
                    const EvalOptions& options) {
  for (const auto& [key, boxes] : dets) {
    if (!gts.contains(key)) {
      throw Error(ErrorCode::kFrameMismatch,
                  "detections for '" + key.video_id + "' frame " +
                      std::to_string(key.frame) +
                      " have no ground-truth frame");
    }
  }
  EvalReport report;
  report.frames = static_cast<int>(gts.size());
  for (const auto& [key, boxes] : gts) {
    report.total_gt += static_cast<int>(boxes.size());
  }
  for (const auto& [key, boxes] : dets) {
    report.total_detections += static_cast<int>(boxes.size());
  }
  report.vacuous = report.total_gt == 0 && report.total_detections == 0;

  double sum = 0.0;
  const auto thresholds = coco_iou_thresholds();
  for (int i = 0; i < 10; ++i) {
    const auto pooled = pool_frames(dets, gts, thresholds[i], std::nullopt);
    const double ap =
        average_precision(pooled.flags, report.total_gt, options.ap_mode);
    report.ap_per_threshold[50 + 5 * i] = ap;
    sum += ap;
  }
  report.map_50 = report.ap_per_threshold.at(50);
  report.ap_95 = report.ap_per_threshold.at(95);
  report.map_50_95 = sum / 10.0;

  const auto at50 =
      pool_frames(dets, gts, thresholds[0], options.confidence_cutoff);
  if (at50.detections > 0) {
    report.precision = static_cast<double>(at50.tp) / at50.detections;
  } else {
    report.precision = report.total_gt == 0 ? 1.0 : 0.0;
  }
  report.recall = report.total_gt > 0
                      ? static_cast<double>(at50.tp) / report.total_gt
                      : 1.0;
  return report;
}

std::string eval_report_to_json(const EvalReport& report) {
  ordered_json j;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  ordered_json per = ordered_json::object();
  for (const auto& [hundredths, ap] : report.ap_per_threshold) {
    char key[8];
    std::snprintf(key, sizeof(key), "%.2f", hundredths / 100.0);
    per[key] = ap;
  }
  j["ap_per_threshold"] = per;
  j["map_50"] = report.map_50;
  j["map_50_95"] = report.map_50_95;
  j["ap_95"] = report.ap_95;
  j["total_gt"] = report.total_gt;
  j["total_detections"] = report.total_detections;
  j["frames"] = report.frames;
  j["vacuous"] = report.vacuous;
  return j.dump(2) + "\n";
}

FrameDetections read_detections_jsonl(std::string_view text) {
  FrameDetections out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FrameKey key{j.at("video_id").get<std::string>(),
                   j.at("frame").get<int>()};
      auto& boxes = out[key];
      for (const auto& b : j.at("boxes")) {
        DetectionBox d;
        d.box = {b.at("x1").get<int>(), b.at("y1").get<int>(),
                 b.at("x2").get<int>(), b.at("y2").get<int>()};
        d.confidence = b.at("confidence").get<double>();
        if (d.box.x1 > d.box.x2 || d.box.y1 > d.box.y2 ||
            !(d.confidence >= 0.0 && d.confidence <= 1.0)) {
          throw Error(ErrorCode::kFormat, "invalid detection box");
        }
        boxes.push_back(d);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormat, "detections line " +
                                          std::to_string(lineno) + ": " +
                                          e.what());
    } catch (const Error& e) {
      throw Error(e.code(),
                  "detections line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string detections_to_jsonl(const FrameDetections& dets) {
  std::string out;
  for (const auto& [key, boxes] : dets) {
    ordered_json j;
    j["video_id"] = key.video_id;
    j["frame"] = key.frame;
    ordered_json arr = ordered_json::array();
    for (const auto& d : boxes) {
      ordered_json b;
      b["x1"] = d.box.x1;
      b["y1"] = d.box.y1;
      b["x2"] = d.box.x2;
      b["y2"] = d.box.y2;
      b["confidence"] = d.confidence;
      arr.push_back(std::move(b));
    }
    j["boxes"] = std::move(arr);
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace maskpipe
