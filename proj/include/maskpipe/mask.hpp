#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace maskpipe {

// Dense row-major 0/1 image. Used for codec boundaries and reference paths;
// the hot paths work on Mask run lists.
class Bitmap {
 public:
  Bitmap() = default;
  Bitmap(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  bool at(int x, int y) const {
    return pixels_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool value) {
    pixels_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
  }
  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  bool operator==(const Bitmap&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Foreground pixels [x_begin, x_end) of row y.
struct RowSpan {
  int y = 0;
  int x_begin = 0;
  int x_end = 0;

  bool operator==(const RowSpan&) const = default;
};

// Foreground pixels [begin, end) in linear (y * width + x) order.
struct Interval {
  std::int64_t begin = 0;
  std::int64_t end = 0;

  bool operator==(const Interval&) const = default;
};

/// Binary foreground mask stored as a canonical run-length encoding.
///
/// Runs scan the image row-major and alternate background/foreground,
/// starting with background. The first run may be zero (mask starts with
/// foreground); no other run is zero. Masks are immutable values.
class Mask {
 public:
  Mask() = default;

  static Mask empty(int width, int height);
  static Mask full(int width, int height);
  static Mask from_bitmap(const Bitmap& bitmap);
  // Spans must be sorted by (y, x_begin) and non-overlapping; touching spans
  // are merged.
  static Mask from_row_spans(int width, int height,
                             std::span<const RowSpan> spans);
  static Mask from_intervals(int width, int height,
                             std::span<const Interval> intervals);

  int width() const { return width_; }
  int height() const { return height_; }
  std::int64_t pixel_count() const {
    return static_cast<std::int64_t>(width_) * height_;
  }
  std::int64_t area() const { return area_; }
  bool is_empty() const { return area_ == 0; }
  const std::vector<std::uint32_t>& runs() const { return runs_; }

  bool contains(int x, int y) const;
  Bitmap to_bitmap() const;
  std::vector<Interval> foreground_intervals() const;
  std::vector<RowSpan> row_spans() const;

  bool operator==(const Mask&) const = default;

 private:
  Mask(int width, int height, std::vector<std::uint32_t> runs,
       std::int64_t area)
      : width_(width), height_(height), runs_(std::move(runs)), area_(area) {}

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> runs_;
  std::int64_t area_ = 0;
};

// Accepts any non-negative run list summing to width * height (interior zero
// runs allowed) and returns the canonical mask.
Mask decode_rle(std::span<const std::int64_t> runs, int width, int height);

void check_dimensions(int width, int height);
void require_same_size(const Mask& a, const Mask& b);

enum class SetOpsPath { kRuns, kBitmap };

struct SetOpsResult {
  std::int64_t intersection_area = 0;
  std::int64_t union_area = 0;
  std::int64_t area_a = 0;
  std::int64_t area_b = 0;
  Mask difference;  // a \ b
};

SetOpsResult set_ops(const Mask& a, const Mask& b,
                     SetOpsPath path = SetOpsPath::kRuns);
std::int64_t intersection_area(const Mask& a, const Mask& b);
Mask difference(const Mask& a, const Mask& b);
Mask mask_union(const Mask& a, const Mask& b);

enum class FrameSource { kModelOutput, kGroundTruth };

struct FrameRecord {
  int frame_index = 1;
  std::optional<Mask> mask;
  FrameSource source = FrameSource::kModelOutput;
};

struct VideoSequence {
  std::string video_id;
  double fps = 0.0;
  int width = 0;
  int height = 0;
  std::vector<FrameRecord> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
  // Absent masks read as empty masks of the sequence dimensions.
  Mask mask_or_empty(std::size_t i) const;
};

// Throws kDimensionMismatch / kFormat when the sequence invariants fail.
void validate_sequence(const VideoSequence& seq);

}  // namespace maskpipe
