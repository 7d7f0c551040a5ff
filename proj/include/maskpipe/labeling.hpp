#pragma once

#include <cstdint>
#include <vector>

#include "maskpipe/mask.hpp"

namespace maskpipe {

struct LabeledSpan {
  int y = 0;
  int x_begin = 0;
  int x_end = 0;
  int label = 0;  // 1..component_count
};

/// 8-connected components of a mask.
///
/// Labels are numbered 1..component_count in order of each component's first
/// pixel in row-major scan, so labeling the same mask twice is bit-identical.
struct LabeledComponents {
  int width = 0;
  int height = 0;
  int component_count = 0;
  std::vector<LabeledSpan> spans;  // sorted by (y, x_begin)
  std::vector<std::int64_t> areas;  // areas[label - 1]

  // 0 for background.
  int label_at(int x, int y) const;
  // Row-major label per pixel, 0 for background.
  std::vector<int> label_image() const;
};

LabeledComponents label_components(const Mask& mask);

// Count-only variant; skips label materialisation.
int count_components(const Mask& mask);

}  // namespace maskpipe
