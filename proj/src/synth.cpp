#include "maskpipe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "maskpipe/error.hpp"
#include "maskpipe/random.hpp"

namespace maskpipe {

namespace {

double max_radius(const SynthConfig& cfg) {
  return cfg.blob_radius * (1.0 + cfg.deform_amplitude);
}

// Folds an unbounded coordinate back into [lo, hi].
double reflect(double v, double lo, double hi) {
  const double len = hi - lo;
  if (len <= 0.0) return lo;
  double t = std::fmod(v - lo, 2.0 * len);
  if (t < 0.0) t += 2.0 * len;
  return lo + (t <= len ? t : 2.0 * len - t);
}

bool occluded(const SynthConfig& cfg, int frame) {
  return cfg.occlusion_window && frame >= cfg.occlusion_window->first &&
         frame <= cfg.occlusion_window->second;
}

[[noreturn]] void infeasible(const std::string& why) {
  throw Error(ErrorCode::kConfigInfeasible, "synth config: " + why);
}

}  // namespace

void validate_config(const SynthConfig& cfg) {
  if (cfg.width <= 0 || cfg.height <= 0) infeasible("empty frame");
  if (cfg.frame_count < 1) infeasible("frame_count must be >= 1");
  if (!(cfg.blob_radius > 0.0)) infeasible("blob_radius must be positive");
  if (!(cfg.deform_amplitude >= 0.0 && cfg.deform_amplitude < 1.0)) {
    infeasible("deform_amplitude must lie in [0, 1)");
  }
  if (cfg.deform_period < 1) infeasible("deform_period must be >= 1");
  if (!(cfg.drift_per_frame >= 0.0)) infeasible("negative drift");
  if (cfg.speckle_count_per_frame < 0) infeasible("negative speckle count");
  if (cfg.speckle_size < 1) infeasible("speckle_size must be >= 1");
  if (cfg.occlusion_window) {
    const auto [s, e] = *cfg.occlusion_window;
    if (s < 1 || e < s || e > cfg.frame_count) {
      infeasible("occlusion window outside [1, frame_count]");
    }
  }
  const double span = 2.0 * (max_radius(cfg) + 1.0);
  if (span > cfg.width || span > cfg.height) {
    infeasible("blob does not fit in the frame");
  }
}

BlobState blob_state(const SynthConfig& cfg, int frame) {
  Rng rng(cfg.rng_seed);
  const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double margin = max_radius(cfg) + 1.0;
  const double x_lo = margin, x_hi = cfg.width - margin;
  const double y_lo = margin, y_hi = cfg.height - margin;
  const double x0 = rng.uniform(x_lo, x_hi);
  const double y0 = rng.uniform(y_lo, y_hi);
  const double t = frame - 1;
  BlobState b;
  b.cx = reflect(x0 + cfg.drift_per_frame * std::cos(heading) * t, x_lo, x_hi);
  b.cy = reflect(y0 + cfg.drift_per_frame * std::sin(heading) * t, y_lo, y_hi);
  b.radius = cfg.blob_radius *
             (1.0 + cfg.deform_amplitude *
                        std::sin(2.0 * std::numbers::pi * frame /
                                 static_cast<double>(cfg.deform_period)));
  return b;
}

Mask render_blob(const BlobState& blob, int width, int height) {
  std::vector<RowSpan> spans;
  for (int y = 0; y < height; ++y) {
    const double half = blob.radius - std::abs(y + 0.5 - blob.cy);
    if (half < 0.0) continue;
    const int xb = std::max(0, static_cast<int>(std::ceil(blob.cx - half - 0.5)));
    const int xe =
        std::min(width - 1, static_cast<int>(std::floor(blob.cx + half - 0.5)));
    if (xb <= xe) spans.push_back({y, xb, xe + 1});
  }
  return Mask::from_row_spans(width, height, spans);
}

namespace {

class Occupancy {
 public:
  Occupancy(int width, int height)
      : width_(width), height_(height),
        cells_(static_cast<std::size_t>(width) * height, 0) {}

  void mark_rect(int x0, int y0, int x1, int y1) {  // inclusive, clipped
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, width_ - 1);
    y1 = std::min(y1, height_ - 1);
    for (int y = y0; y <= y1; ++y) {
      auto* row = &cells_[static_cast<std::size_t>(y) * width_];
      for (int x = x0; x <= x1; ++x) row[x] = 1;
    }
  }

  void mark_mask(const Mask& m, int grow) {
    for (const auto& s : m.row_spans()) {
      mark_rect(s.x_begin - grow, s.y - grow, s.x_end - 1 + grow, s.y + grow);
    }
  }

  bool free_square(int x, int y, int size) const {
    for (int yy = y; yy < y + size; ++yy) {
      const auto* row = &cells_[static_cast<std::size_t>(yy) * width_];
      for (int xx = x; xx < x + size; ++xx) {
        if (row[xx]) return false;
      }
    }
    return true;
  }

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> cells_;
};

}  // namespace

Mask inject_speckle(const Mask& mask, int count, int size, std::uint64_t seed,
                    const Mask* avoid) {
  if (count < 0 || size < 1) {
    throw Error(ErrorCode::kInvalidArgument, "invalid speckle parameters");
  }
  if (count == 0) return mask;
  const int w = mask.width();
  const int h = mask.height();
  if (avoid) require_same_size(mask, *avoid);
  if (size > w || size > h) {
    throw Error(ErrorCode::kNoSpace, "speck larger than the frame");
  }
  Occupancy occ(w, h);
  occ.mark_mask(mask, 1);
  if (avoid) occ.mark_mask(*avoid, 0);

  Rng rng(seed);
  std::vector<RowSpan> specks;
  auto place = [&](int x, int y) {
    occ.mark_rect(x - 1, y - 1, x + size, y + size);
    for (int yy = y; yy < y + size; ++yy) specks.push_back({yy, x, x + size});
  };

  constexpr int kRandomTries = 256;
  for (int placed = 0; placed < count; ++placed) {
    bool ok = false;
    for (int t = 0; t < kRandomTries && !ok; ++t) {
      const int x = static_cast<int>(rng.uniform_int(0, w - size));
      const int y = static_cast<int>(rng.uniform_int(0, h - size));
      if (occ.free_square(x, y, size)) {
        place(x, y);
        ok = true;
      }
    }
    if (ok) continue;
    // Crowded frame: fall back to a uniform pick among every free position.
    std::vector<std::pair<int, int>> free_positions;
    for (int y = 0; y <= h - size; ++y) {
      for (int x = 0; x <= w - size; ++x) {
        if (occ.free_square(x, y, size)) free_positions.emplace_back(x, y);
      }
    }
    if (free_positions.empty()) {
      throw Error(ErrorCode::kNoSpace,
                  "no room for speck " + std::to_string(placed + 1) + " of " +
                      std::to_string(count));
    }
    const auto pick = free_positions[static_cast<std::size_t>(rng.uniform_int(
        0, static_cast<std::int64_t>(free_positions.size()) - 1))];
    place(pick.first, pick.second);
  }
  std::sort(specks.begin(), specks.end(),
            [](const RowSpan& a, const RowSpan& b) {
              return a.y != b.y ? a.y < b.y : a.x_begin < b.x_begin;
            });
  return mask_union(mask, Mask::from_row_spans(w, h, specks));
}

SynthSequences generate_sequence(const SynthConfig& cfg) {
  validate_config(cfg);
  SynthSequences out;
  for (auto* seq : {&out.ground_truth, &out.degraded}) {
    seq->video_id = cfg.video_id;
    seq->fps = cfg.fps;
    seq->width = cfg.width;
    seq->height = cfg.height;
  }
  auto clean = [&](int frame) {
    if (frame < 1 || frame > cfg.frame_count || occluded(cfg, frame)) {
      return Mask::empty(cfg.width, cfg.height);
    }
    return render_blob(blob_state(cfg, frame), cfg.width, cfg.height);
  };

  Mask prev_gt = clean(0);
  Mask gt = clean(1);
  Mask prev_specks = Mask::empty(cfg.width, cfg.height);
  for (int n = 1; n <= cfg.frame_count; ++n) {
    Mask next_gt = clean(n + 1);
    Mask degraded = gt;
    if (cfg.speckle_count_per_frame > 0) {
      const Mask avoid = mask_union(mask_union(prev_gt, next_gt), prev_specks);
      try {
        degraded = inject_speckle(gt, cfg.speckle_count_per_frame,
                                  cfg.speckle_size,
                                  splitmix64(cfg.rng_seed ^ splitmix64(n)),
                                  &avoid);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNoSpace) throw;
        infeasible("frame " + std::to_string(n) + ": " + e.what());
      }
      prev_specks = difference(degraded, gt);
    }
    out.ground_truth.frames.push_back({n, gt, FrameSource::kGroundTruth});
    out.degraded.frames.push_back(
        {n, std::move(degraded), FrameSource::kModelOutput});
    prev_gt = std::move(gt);
    gt = std::move(next_gt);
  }
  return out;
}

}  // namespace maskpipe
