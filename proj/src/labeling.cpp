#include "maskpipe/labeling.hpp"

#include <algorithm>
#include <numeric>

namespace maskpipe {

namespace {

// Union-find whose root is always the smallest member index, which makes the
// root the first span of its component in scan order.
class MinRootUnionFind {
 public:
  explicit MinRootUnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t i) {
    std::size_t root = i;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[i] != root) {
      const std::size_t next = parent_[i];
      parent_[i] = root;
      i = next;
    }
    return root;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) {
      parent_[b] = a;
    } else {
      parent_[a] = b;
    }
  }

 private:
  std::vector<std::size_t> parent_;
};

// Links spans of adjacent rows that touch under 8-connectivity, i.e. whose
// column intervals intersect after widening one side by a pixel.
void link_rows(const std::vector<RowSpan>& spans, MinRootUnionFind& uf) {
  std::size_t prev_begin = 0, prev_end = 0;
  std::size_t cur_begin = 0;
  while (cur_begin < spans.size()) {
    const int y = spans[cur_begin].y;
    std::size_t cur_end = cur_begin;
    while (cur_end < spans.size() && spans[cur_end].y == y) ++cur_end;

    if (prev_end > prev_begin && spans[prev_begin].y == y - 1) {
      std::size_t i = prev_begin, j = cur_begin;
      while (i < prev_end && j < cur_end) {
        const auto& a = spans[i];
        const auto& b = spans[j];
        if (a.x_begin <= b.x_end && b.x_begin <= a.x_end) uf.unite(i, j);
        if (a.x_end <= b.x_end) {
          ++i;
        } else {
          ++j;
        }
      }
    }
    prev_begin = cur_begin;
    prev_end = cur_end;
    cur_begin = cur_end;
  }
}

}  // namespace

LabeledComponents label_components(const Mask& mask) {
  LabeledComponents out;
  out.width = mask.width();
  out.height = mask.height();
  const auto spans = mask.row_spans();
  MinRootUnionFind uf(spans.size());
  link_rows(spans, uf);

  std::vector<int> root_label(spans.size(), 0);
  out.spans.reserve(spans.size());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const std::size_t root = uf.find(i);
    if (root == i) {
      root_label[i] = ++out.component_count;
      out.areas.push_back(0);
    }
    const int label = root_label[root];
    out.spans.push_back(
        {spans[i].y, spans[i].x_begin, spans[i].x_end, label});
    out.areas[label - 1] += spans[i].x_end - spans[i].x_begin;
  }
  return out;
}

int count_components(const Mask& mask) {
  const auto spans = mask.row_spans();
  MinRootUnionFind uf(spans.size());
  link_rows(spans, uf);
  int count = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (uf.find(i) == i) ++count;
  }
  return count;
}

int LabeledComponents::label_at(int x, int y) const {
  auto it = std::lower_bound(
      spans.begin(), spans.end(), std::pair{y, x},
      [](const LabeledSpan& s, const std::pair<int, int>& key) {
        return s.y < key.first || (s.y == key.first && s.x_end <= key.second);
      });
  if (it != spans.end() && it->y == y && it->x_begin <= x && x < it->x_end) {
    return it->label;
  }
  return 0;
}

std::vector<int> LabeledComponents::label_image() const {
  std::vector<int> image(static_cast<std::size_t>(width) * height, 0);
  for (const auto& s : spans) {
    const auto row = static_cast<std::size_t>(s.y) * width;
    std::fill(image.begin() + row + s.x_begin, image.begin() + row + s.x_end,
              s.label);
  }
  return image;
}

}  // namespace maskpipe
