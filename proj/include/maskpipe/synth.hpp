#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "maskpipe/mask.hpp"

namespace maskpipe {

struct SynthConfig {
  std::string video_id = "synth";
  int width = 320;
  int height = 240;
  int frame_count = 300;
  double blob_radius = 40.0;
  double drift_per_frame = 1.5;   // pixels; heading is drawn from the seed
  double deform_amplitude = 0.05; // relative radius modulation
  int deform_period = 40;         // frames per radius oscillation
  std::optional<std::pair<int, int>> occlusion_window;  // inclusive, 1-based
  int speckle_count_per_frame = 0;
  int speckle_size = 1;           // side of a square speck
  std::uint64_t rng_seed = 0;
  double fps = 30.0;
};

// Throws kConfigInfeasible when the blob cannot fit or the window is invalid.
void validate_config(const SynthConfig& cfg);

struct BlobState {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
};

// Closed-form blob pose for 1-based frame n.
BlobState blob_state(const SynthConfig& cfg, int frame);

// Pixels whose centres satisfy |x - cx| + |y - cy| <= radius.
Mask render_blob(const BlobState& blob, int width, int height);

struct SynthSequences {
  VideoSequence ground_truth;
  VideoSequence degraded;
};

/// Ground truth is one drifting, deforming blob per frame (empty inside the
/// occlusion window). Degraded adds exactly speckle_count_per_frame specks
/// per frame that touch neither the blob nor each other, and overlap neither
/// the neighbouring frames' blobs nor the previous frame's specks, so each
/// speck adds exactly one NC_t component. kConfigInfeasible when the specks
/// do not fit.
SynthSequences generate_sequence(const SynthConfig& cfg);

/// Adds `count` square specks of side `size`, each at Chebyshev distance >= 2
/// from every foreground pixel of `mask` and from each other, and disjoint
/// from `avoid`. Throws kNoSpace if they do not fit.
Mask inject_speckle(const Mask& mask, int count, int size, std::uint64_t seed,
                    const Mask* avoid = nullptr);

}  // namespace maskpipe
