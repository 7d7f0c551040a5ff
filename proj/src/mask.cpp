#include "maskpipe/mask.hpp"

#include <algorithm>
#include <limits>

#include "maskpipe/error.hpp"

namespace maskpipe {

namespace {

constexpr std::int64_t kMaxPixels = std::numeric_limits<std::uint32_t>::max();

// Accumulates sorted, non-overlapping foreground intervals into canonical
// runs.
class RunBuilder {
 public:
  explicit RunBuilder(std::int64_t total) : total_(total) {}

  void add(std::int64_t begin, std::int64_t end) {
    if (begin >= end) return;
    if (begin < pos_ || end > total_) {
      throw Error(ErrorCode::kFormat, "foreground intervals overlap, are "
                                      "unsorted, or exceed the mask");
    }
    const std::int64_t gap = begin - pos_;
    if (runs_.empty()) {
      runs_.push_back(static_cast<std::uint32_t>(gap));
      runs_.push_back(static_cast<std::uint32_t>(end - begin));
    } else if (gap == 0) {
      runs_.back() += static_cast<std::uint32_t>(end - begin);
    } else {
      runs_.push_back(static_cast<std::uint32_t>(gap));
      runs_.push_back(static_cast<std::uint32_t>(end - begin));
    }
    area_ += end - begin;
    pos_ = end;
  }

  std::vector<std::uint32_t> finish() && {
    if (runs_.empty()) {
      runs_.push_back(static_cast<std::uint32_t>(total_));
    } else if (pos_ < total_) {
      runs_.push_back(static_cast<std::uint32_t>(total_ - pos_));
    }
    return std::move(runs_);
  }

  std::int64_t area() const { return area_; }

 private:
  std::int64_t total_;
  std::int64_t pos_ = 0;
  std::int64_t area_ = 0;
  std::vector<std::uint32_t> runs_;
};

}  // namespace

Bitmap::Bitmap(int width, int height) : width_(width), height_(height) {
  check_dimensions(width, height);
  pixels_.assign(static_cast<std::size_t>(width) * height, 0);
}

void check_dimensions(int width, int height) {
  if (width <= 0 || height <= 0 ||
      static_cast<std::int64_t>(width) * height > kMaxPixels) {
    throw Error(ErrorCode::kInvalidDimensions,
                "invalid mask dimensions " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
}

void require_same_size(const Mask& a, const Mask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "mask dimensions differ: " + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " +
                    std::to_string(b.width()) + "x" +
                    std::to_string(b.height()));
  }
}

Mask Mask::empty(int width, int height) {
  check_dimensions(width, height);
  return Mask(width, height,
              {static_cast<std::uint32_t>(
                  static_cast<std::int64_t>(width) * height)},
              0);
}

Mask Mask::full(int width, int height) {
  check_dimensions(width, height);
  const auto total = static_cast<std::int64_t>(width) * height;
  return Mask(width, height, {0, static_cast<std::uint32_t>(total)}, total);
}

Mask Mask::from_bitmap(const Bitmap& bitmap) {
  check_dimensions(bitmap.width(), bitmap.height());
  const auto px = bitmap.pixels();
  const auto total = static_cast<std::int64_t>(px.size());
  RunBuilder builder(total);
  std::int64_t i = 0;
  while (i < total) {
    if (px[i] == 0) {
      ++i;
      continue;
    }
    std::int64_t j = i;
    while (j < total && px[j] != 0) ++j;
    builder.add(i, j);
    i = j;
  }
  const auto area = builder.area();
  return Mask(bitmap.width(), bitmap.height(), std::move(builder).finish(),
              area);
}

Mask Mask::from_row_spans(int width, int height,
                          std::span<const RowSpan> spans) {
  check_dimensions(width, height);
  RunBuilder builder(static_cast<std::int64_t>(width) * height);
  for (const auto& s : spans) {
    if (s.y < 0 || s.y >= height || s.x_begin < 0 || s.x_end > width) {
      throw Error(ErrorCode::kOutOfBounds, "row span outside the mask");
    }
    const auto row = static_cast<std::int64_t>(s.y) * width;
    builder.add(row + s.x_begin, row + s.x_end);
  }
  const auto area = builder.area();
  return Mask(width, height, std::move(builder).finish(), area);
}

Mask Mask::from_intervals(int width, int height,
                          std::span<const Interval> intervals) {
  check_dimensions(width, height);
  RunBuilder builder(static_cast<std::int64_t>(width) * height);
  for (const auto& iv : intervals) builder.add(iv.begin, iv.end);
  const auto area = builder.area();
  return Mask(width, height, std::move(builder).finish(), area);
}

bool Mask::contains(int x, int y) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return false;
  const std::int64_t target = static_cast<std::int64_t>(y) * width_ + x;
  std::int64_t pos = 0;
  for (std::size_t i = 0; i < runs_.size(); ++i) {
    pos += runs_[i];
    if (target < pos) return (i % 2) == 1;
  }
  return false;
}

Bitmap Mask::to_bitmap() const {
  Bitmap bitmap(width_, height_);
  auto px = bitmap.pixels();
  for (const auto& iv : foreground_intervals()) {
    std::fill(px.begin() + iv.begin, px.begin() + iv.end, std::uint8_t{1});
  }
  return bitmap;
}

std::vector<Interval> Mask::foreground_intervals() const {
  std::vector<Interval> out;
  out.reserve(runs_.size() / 2);
  std::int64_t pos = 0;
  for (std::size_t i = 0; i < runs_.size(); ++i) {
    const std::int64_t next = pos + runs_[i];
    if (i % 2 == 1) out.push_back({pos, next});
    pos = next;
  }
  return out;
}

std::vector<RowSpan> Mask::row_spans() const {
  std::vector<RowSpan> out;
  out.reserve(runs_.size() / 2);
  const std::int64_t w = width_;
  std::int64_t pos = 0;
  for (std::size_t i = 0; i < runs_.size(); ++i) {
    const std::int64_t next = pos + runs_[i];
    if (i % 2 == 1) {
      std::int64_t b = pos;
      while (b < next) {
        const std::int64_t y = b / w;
        const std::int64_t seg_end = std::min(next, (y + 1) * w);
        out.push_back({static_cast<int>(y), static_cast<int>(b - y * w),
                       static_cast<int>(seg_end - y * w)});
        b = seg_end;
      }
    }
    pos = next;
  }
  return out;
}

Mask decode_rle(std::span<const std::int64_t> runs, int width, int height) {
  check_dimensions(width, height);
  const auto total = static_cast<std::int64_t>(width) * height;
  std::int64_t sum = 0;
  bool overflow = false;
  for (const auto r : runs) {
    if (r < 0) throw Error(ErrorCode::kNegativeRun, "negative run length");
    if (r > total - sum) overflow = true;
    if (!overflow) sum += r;
  }
  if (overflow || sum != total) {
    throw Error(ErrorCode::kSizeMismatch,
                "run lengths do not sum to width*height (" +
                    std::to_string(total) + ")");
  }
  std::vector<Interval> intervals;
  std::int64_t pos = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (i % 2 == 1 && runs[i] > 0) {
      // Interior zero runs merge neighbouring foreground runs.
      if (!intervals.empty() && intervals.back().end == pos) {
        intervals.back().end = pos + runs[i];
      } else {
        intervals.push_back({pos, pos + runs[i]});
      }
    }
    pos += runs[i];
  }
  return Mask::from_intervals(width, height, intervals);
}

namespace {

SetOpsResult set_ops_runs(const Mask& a, const Mask& b) {
  const auto ia = a.foreground_intervals();
  const auto ib = b.foreground_intervals();
  std::int64_t inter = 0;
  std::vector<Interval> diff;
  diff.reserve(ia.size());
  std::size_t j = 0;
  for (const auto& x : ia) {
    std::int64_t cursor = x.begin;
    while (j < ib.size() && ib[j].end <= x.begin) ++j;
    std::size_t k = j;
    while (k < ib.size() && ib[k].begin < x.end) {
      const auto lo = std::max(x.begin, ib[k].begin);
      const auto hi = std::min(x.end, ib[k].end);
      inter += hi - lo;
      if (lo > cursor) diff.push_back({cursor, lo});
      cursor = std::max(cursor, hi);
      if (ib[k].end > x.end) break;
      ++k;
    }
    if (cursor < x.end) diff.push_back({cursor, x.end});
  }
  SetOpsResult r;
  r.area_a = a.area();
  r.area_b = b.area();
  r.intersection_area = inter;
  r.union_area = r.area_a + r.area_b - inter;
  r.difference = Mask::from_intervals(a.width(), a.height(), diff);
  return r;
}

SetOpsResult set_ops_bitmap(const Mask& a, const Mask& b) {
  const auto ba = a.to_bitmap();
  const auto bb = b.to_bitmap();
  Bitmap diff(a.width(), a.height());
  const auto pa = ba.pixels();
  const auto pb = bb.pixels();
  auto pd = diff.pixels();
  SetOpsResult r;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const bool in_a = pa[i] != 0;
    const bool in_b = pb[i] != 0;
    r.area_a += in_a;
    r.area_b += in_b;
    r.intersection_area += in_a && in_b;
    r.union_area += in_a || in_b;
    pd[i] = (in_a && !in_b) ? 1 : 0;
  }
  r.difference = Mask::from_bitmap(diff);
  return r;
}

}  // namespace

SetOpsResult set_ops(const Mask& a, const Mask& b, SetOpsPath path) {
  require_same_size(a, b);
  return path == SetOpsPath::kRuns ? set_ops_runs(a, b) : set_ops_bitmap(a, b);
}

std::int64_t intersection_area(const Mask& a, const Mask& b) {
  require_same_size(a, b);
  const auto ia = a.foreground_intervals();
  const auto ib = b.foreground_intervals();
  std::int64_t inter = 0;
  std::size_t i = 0, j = 0;
  while (i < ia.size() && j < ib.size()) {
    const auto lo = std::max(ia[i].begin, ib[j].begin);
    const auto hi = std::min(ia[i].end, ib[j].end);
    if (hi > lo) inter += hi - lo;
    if (ia[i].end < ib[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  return inter;
}

Mask difference(const Mask& a, const Mask& b) {
  return set_ops_runs(a, b).difference;
}

Mask mask_union(const Mask& a, const Mask& b) {
  require_same_size(a, b);
  const auto ia = a.foreground_intervals();
  const auto ib = b.foreground_intervals();
  std::vector<Interval> merged;
  merged.reserve(ia.size() + ib.size());
  std::merge(ia.begin(), ia.end(), ib.begin(), ib.end(),
             std::back_inserter(merged),
             [](const Interval& x, const Interval& y) {
               return x.begin < y.begin;
             });
  std::vector<Interval> out;
  for (const auto& iv : merged) {
    if (!out.empty() && iv.begin <= out.back().end) {
      out.back().end = std::max(out.back().end, iv.end);
    } else {
      out.push_back(iv);
    }
  }
  return Mask::from_intervals(a.width(), a.height(), out);
}

Mask VideoSequence::mask_or_empty(std::size_t i) const {
  const auto& rec = frames.at(i);
  if (rec.mask) return *rec.mask;
  return Mask::empty(width, height);
}

void validate_sequence(const VideoSequence& seq) {
  check_dimensions(seq.width, seq.height);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& rec = seq.frames[i];
    if (rec.frame_index != static_cast<int>(i) + 1) {
      throw Error(ErrorCode::kFormat,
                  "frame indices of '" + seq.video_id +
                      "' are not consecutive from 1");
    }
    if (rec.mask && (rec.mask->width() != seq.width ||
                     rec.mask->height() != seq.height)) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "frame " + std::to_string(rec.frame_index) + " of '" +
                      seq.video_id + "' has different dimensions");
    }
  }
}

}  // namespace maskpipe
