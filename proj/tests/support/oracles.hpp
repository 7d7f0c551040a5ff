#pragma once

// Independent reference implementations used only by tests. Everything here
// works on dense bitmaps with per-pixel loops and explicit-stack flood fill,
// sharing no code with the run-length paths under test.

#include <cstdint>
#include <random>
#include <vector>

#include "maskpipe/mask.hpp"

namespace maskpipe::oracle {

Bitmap bitmap_from_bits(int width, int height, std::uint64_t bits);
Bitmap random_bitmap(int width, int height, double density, std::mt19937_64& rng);

// 8-connected flood fill in raster order; labels 1.. by first pixel.
std::vector<int> flood_fill_labels(const Bitmap& b, int* count = nullptr);
int count_components_oracle(const Bitmap& b);

struct NaiveSetOps {
  std::int64_t intersection = 0;
  std::int64_t uni = 0;
  std::int64_t area_a = 0;
  std::int64_t area_b = 0;
  Bitmap difference;
};
NaiveSetOps naive_set_ops(const Bitmap& a, const Bitmap& b);

double naive_dice(const Bitmap& current, const Bitmap& previous);
int naive_nc_difference(const Bitmap& current, const Bitmap& previous);
int naive_nc_parent(const Bitmap& current, const Bitmap& previous);

// Area under the precision envelope, evaluated straight from its definition:
// envelope(r) = max precision over operating points with recall >= r.
double brute_force_envelope_area(const std::vector<bool>& flags, int total_gt);

}  // namespace maskpipe::oracle
