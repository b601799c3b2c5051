#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "screcon/geometry.hpp"
#include "screcon/image.hpp"

namespace screcon {

// Dense warp of every source pixel of frame i into frame j. `valid` here
// covers the source-side conditions only (source depth valid, warped depth
// positive, warped coordinate inside the target rectangle).
struct WarpField {
  int width = 0;
  int height = 0;
  std::vector<PixelCoord> coords;
  std::vector<double> depth;
  std::vector<std::uint8_t> valid;
};

WarpField warp_frame(const DepthMap& depth_i, const Intrinsics& K, const PoseMatrix& pose_i,
                     const PoseMatrix& pose_j);

// Pixels of the pair (i, j) that participate in the losses: warp valid,
// target depth sample valid, source not sky-masked, and the geometric
// denominator bounded away from zero.
struct ValidSet {
  std::vector<std::uint8_t> flags;
  std::size_t count = 0;
  bool no_overlap() const { return count == 0; }
};

ValidSet build_valid_set(const WarpField& wf, const DepthMap& depth_j,
                         const PixelMask* mask_i = nullptr);

struct LossWeights {
  double lambda_pc = 2.0;
  double lambda_gc = 0.5;
  double lambda_regu = 0.01;
};

struct LossBreakdown {
  double pc = 0.0;
  double gc = 0.0;
  double regu = 0.0;
  double total = 0.0;
};

// Mean over the valid set of the per-pixel mean-over-channels absolute color
// difference, sampling the target image bilinearly at the warped coordinate.
double photometric_loss(const ImageBuffer& image_i, const ImageBuffer& image_j,
                        const WarpField& wf, const ValidSet& v);

// Mean over the valid set of |d_j(p') - d'| / (d_j(p') + d'), the
// scale-normalized depth disagreement; each term lies in [0, 1).
double geometric_loss(const DepthMap& depth_j, const WarpField& wf, const ValidSet& v);

// Sum over frames and anchors of |1 - omega|; no averaging.
double regularization_loss(std::span<const std::vector<double>> omega_per_frame);

LossBreakdown total_loss(double pc, double gc, double regu, const LossWeights& w);

}  // namespace screcon
