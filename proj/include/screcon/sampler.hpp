#pragma once

#include <span>
#include <utility>
#include <vector>

#include "screcon/geometry.hpp"
#include "screcon/image.hpp"
#include "screcon/rng.hpp"

namespace screcon {

struct SamplerConfig {
  int k = 6;                  // temporal neighborhood size
  double phi = 0.7853981633974483;  // pi/4, rotation-angle tent threshold
  double sigma = 0.85;        // downsampling similarity threshold
  int refs_per_step = 50;
  std::uint64_t seed = 0;
};

// Per-reference-frame candidate keyframes with normalized sampling weights.
struct KeyframeSchedule {
  struct PerRef {
    std::vector<int> candidates;
    std::vector<double> weights;  // same length, sums to 1 unless isolated
    bool isolated = false;
  };
  std::vector<PerRef> refs;
};

// Two-stage temporal downsampling: a similarity walk picks pivots where the
// appearance has drifted below sigma, then 3 frames (fewer for short gaps)
// are evenly inserted between adjacent pivots. Frame 0 is always kept.
std::vector<int> downsample_frames(std::span<const ImageBuffer> frames, const SamplerConfig& cfg);

// Similarity score used by the walk: zero-mean normalized cross-correlation
// of 32x24 grayscale thumbnails, in [-1, 1].
double frame_similarity(const ImageBuffer& a, const ImageBuffer& b);

KeyframeSchedule local_probabilities(int frame_count, int k);

double relative_angle(const PoseMatrix& pose_i, const PoseMatrix& pose_j);

// Piecewise tent over the relative rotation angle; raw (unnormalized) value.
double angle_tent(double theta, double phi);

KeyframeSchedule global_probabilities(std::span<const PoseMatrix> poses, const SamplerConfig& cfg);

std::vector<std::pair<int, int>> sample_pairs(const KeyframeSchedule& schedule, int refs_per_step,
                                              Rng& rng);

}  // namespace screcon
