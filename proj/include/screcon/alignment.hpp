#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "screcon/image.hpp"
#include "screcon/tape.hpp"

namespace screcon {

struct GlobalAffine {
  double alpha = 1.0;
  double beta = 0.0;
};

// Anchor grid for the local refinement stage. Coordinates are fixed once
// per run; depths are re-read from the current globally aligned map, and
// anchors that land on invalid pixels are dropped from the solve.
struct AnchorSet {
  std::vector<int> u;
  std::vector<int> v;
  std::vector<double> omega;
  std::vector<double> depths;
  std::vector<std::uint8_t> valid;
  int grid_side = 0;

  std::size_t size() const { return u.size(); }
};

struct LocalAffineMaps {
  int width = 0;
  int height = 0;
  std::vector<double> scale;
  std::vector<double> shift;
  bool fallback_used = false;
};

struct LwlrConfig {
  double bandwidth = 0.0;  // pixels; <= 0 selects the anchor-spacing default
  double lambda = 0.1;     // ridge strength, applied to the shift parameter only
  int stride = 4;          // coarse evaluation stride, 1 = every pixel
};

// Default kernel bandwidth: the anchor grid spacing, averaged over axes for
// non-square images so one scalar serves both directions.
double default_bandwidth(int width, int height, int grid_side);

DepthMap global_align(const DepthMap& affine_depth, const GlobalAffine& g);

// Pixel coordinates of the side x side anchor grid (anchor_count a perfect
// square), row-major: u = floor((col + 0.5) * W / side), likewise v.
void anchor_grid(int width, int height, int anchor_count, std::vector<int>& u,
                 std::vector<int>& v);

AnchorSet sample_anchors(const DepthMap& global_depth, int anchor_count);

// Re-reads anchor depths (and validity) from a map at the stored coordinates.
void refresh_anchor_depths(AnchorSet& anchors, const DepthMap& global_depth);

LocalAffineMaps lwlr_solve(const DepthMap& global_depth, const AnchorSet& anchors,
                           std::span<const double> targets, const LwlrConfig& cfg);

DepthMap consistency_align(const DepthMap& affine_depth, const GlobalAffine& g,
                           const AnchorSet& anchors, const LwlrConfig& cfg,
                           LocalAffineMaps* maps_out = nullptr);

// Precomputed per-resolution tables for the coarse LWLR grid: sample
// positions, per-location Gaussian anchor weights, and the bilinear
// upsample plan. Everything here is independent of the optimization
// variables, so it is built once and shared across frames and iterations.
struct AlignGeometry {
  int width = 0;
  int height = 0;
  int n_loc = 0;           // coarse sample count (nx * ny)
  int n_anchor = 0;        // anchors used by the weight table
  std::vector<int> xs;     // coarse x positions, stride steps plus the last column
  std::vector<int> ys;     // coarse y positions
  std::vector<double> w;   // [loc * n_anchor + t] Gaussian weight
  std::vector<double> sw;  // [loc] sum of weights
  double lambda = 0.1;

  // Per fine pixel: 4 coarse indices and 4 interpolation weights.
  std::vector<std::int32_t> up_idx;  // [pixel * 4 + k]
  std::vector<double> up_w;          // [pixel * 4 + k]
};

AlignGeometry build_align_geometry(int width, int height, std::span<const int> anchor_u,
                                   std::span<const int> anchor_v, const LwlrConfig& cfg);

namespace detail {

// Solves the 2-parameter weighted ridge fit at one coarse location from
// precomputed moment sums. Shared by the scalar and tape paths. The ridge
// penalizes only the shift, so a zero-residual fit at scale 1 / shift 0 is
// reproduced exactly. Falls back to a weighted scale-only fit when the
// system is numerically singular (all anchor depths equal with lambda = 0).
template <class S>
inline void solve_location(const S& sxx, const S& sx, const S& sxy, const S& sy, double sw,
                           double lambda, S& scale_out, S& shift_out, bool* fallback) {
  using ad::value_of;
  const double swl = sw + lambda;
  const S det = sxx * swl - sx * sx;
  const double det_scale = std::max(std::abs(value_of(sxx)) * swl,
                                    value_of(sx) * value_of(sx));
  if (!(std::abs(value_of(det)) > 1e-12 * std::max(det_scale, 1e-300))) {
    scale_out = sxy / (sxx + 1e-300);
    shift_out = sxy * 0.0;
    if (fallback) *fallback = true;
    return;
  }
  scale_out = (sxy * swl - sx * sy) / det;
  shift_out = (sxx * sy - sx * sxy) / det;
}

}  // namespace detail

// Rectifies one frame on the tape or in plain doubles: global affine,
// anchor targets, coarse LWLR solve, bilinear upsample, composition.
// `affine_depth`/`affine_valid` describe the raw model depth. Outputs a
// full-resolution depth with validity derived from current values.
template <class S>
struct RectifiedFrame {
  std::vector<S> depth;
  std::vector<std::uint8_t> valid;
  std::vector<S> coarse_scale;
  std::vector<S> coarse_shift;
};

template <class S>
void rectify_frame(const AlignGeometry& geo, std::span<const double> affine_depth,
                   std::span<const std::uint8_t> affine_valid,
                   std::span<const int> anchor_u, std::span<const int> anchor_v,
                   const S& alpha, const S& beta, std::span<const S> omega,
                   RectifiedFrame<S>& out) {
  using ad::value_of;
  const int W = geo.width, H = geo.height;
  const std::size_t n_anchor = static_cast<std::size_t>(geo.n_anchor);
  if (omega.size() != n_anchor || anchor_u.size() != n_anchor)
    throw std::invalid_argument("rectify_frame: anchor count mismatch");

  // Anchor depths under the current global affine, and the derived products
  // feeding the per-location moment sums.
  thread_local std::vector<S> d, y, dd, dy;
  d.clear(); y.clear(); dd.clear(); dy.clear();
  for (std::size_t t = 0; t < n_anchor; ++t) {
    const std::size_t pix =
        static_cast<std::size_t>(anchor_v[t]) * static_cast<std::size_t>(W) +
        static_cast<std::size_t>(anchor_u[t]);
    const S dg = ad::scale_shift(alpha, beta, affine_depth[pix]);
    d.push_back(dg);
    y.push_back(omega[t] * dg);
    dd.push_back(dg * dg);
    dy.push_back(dg * y.back());
  }

  out.coarse_scale.resize(static_cast<std::size_t>(geo.n_loc));
  out.coarse_shift.resize(static_cast<std::size_t>(geo.n_loc));
  bool fallback = false;
  for (int loc = 0; loc < geo.n_loc; ++loc) {
    const double* wrow = geo.w.data() + static_cast<std::size_t>(loc) * n_anchor;
    std::span<const double> wspan(wrow, n_anchor);
    const S sxx = ad::dot(dd, wspan);
    const S sx = ad::dot(d, wspan);
    const S sxy = ad::dot(dy, wspan);
    const S sy = ad::dot(y, wspan);
    detail::solve_location(sxx, sx, sxy, sy, geo.sw[static_cast<std::size_t>(loc)], geo.lambda,
                           out.coarse_scale[static_cast<std::size_t>(loc)],
                           out.coarse_shift[static_cast<std::size_t>(loc)], &fallback);
  }

  const std::size_t n_px = static_cast<std::size_t>(W) * static_cast<std::size_t>(H);
  out.depth.resize(n_px);
  out.valid.assign(n_px, 0);
  for (std::size_t p = 0; p < n_px; ++p) {
    if (!affine_valid[p]) continue;
    const std::int32_t* idx = geo.up_idx.data() + p * 4;
    const double* wgt = geo.up_w.data() + p * 4;
    const S a = ad::blend4(out.coarse_scale[static_cast<std::size_t>(idx[0])],
                           out.coarse_scale[static_cast<std::size_t>(idx[1])],
                           out.coarse_scale[static_cast<std::size_t>(idx[2])],
                           out.coarse_scale[static_cast<std::size_t>(idx[3])], wgt);
    const S b = ad::blend4(out.coarse_shift[static_cast<std::size_t>(idx[0])],
                           out.coarse_shift[static_cast<std::size_t>(idx[1])],
                           out.coarse_shift[static_cast<std::size_t>(idx[2])],
                           out.coarse_shift[static_cast<std::size_t>(idx[3])], wgt);
    const S dg = ad::scale_shift(alpha, beta, affine_depth[p]);
    const S dfinal = ad::mul_add(a, dg, b);
    out.depth[p] = dfinal;
    out.valid[p] = value_of(dfinal) > kDepthEpsilon ? 1 : 0;
  }
}

}  // namespace screcon
