#include "screcon/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace screcon {

WarpField warp_frame(const DepthMap& depth_i, const Intrinsics& K, const PoseMatrix& pose_i,
                     const PoseMatrix& pose_j) {
  const int W = depth_i.width(), H = depth_i.height();
  WarpField wf;
  wf.width = W;
  wf.height = H;
  const std::size_t n = depth_i.size();
  wf.coords.resize(n);
  wf.depth.assign(n, 0.0);
  wf.valid.assign(n, 0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * W + x;
      if (!depth_i.valid(x, y)) continue;
      const double d = depth_i.at(x, y);
      if (!(d > 0.0)) continue;
      const WarpResult r = warp_point({static_cast<double>(x), static_cast<double>(y)}, d, K,
                                      pose_i, pose_j);
      wf.coords[p] = r.coord;
      wf.depth[p] = r.depth;
      wf.valid[p] = r.valid ? 1 : 0;
    }
  }
  return wf;
}

ValidSet build_valid_set(const WarpField& wf, const DepthMap& depth_j, const PixelMask* mask_i) {
  if (depth_j.width() != wf.width || depth_j.height() != wf.height)
    throw std::invalid_argument("build_valid_set: resolution mismatch");
  ValidSet v;
  const std::size_t n = wf.valid.size();
  v.flags.assign(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    if (!wf.valid[p]) continue;
    if (mask_i && !mask_i->data()[p]) continue;
    const DepthSample s = sample_bilinear(depth_j, wf.coords[p]);
    if (!s.valid) continue;
    if (s.value + wf.depth[p] < 2.0 * kDepthEpsilon) continue;
    v.flags[p] = 1;
    ++v.count;
  }
  return v;
}

double photometric_loss(const ImageBuffer& image_i, const ImageBuffer& image_j,
                        const WarpField& wf, const ValidSet& v) {
  if (v.no_overlap()) return 0.0;
  const int channels = image_i.channels();
  if (channels != image_j.channels())
    throw std::invalid_argument("photometric_loss: channel mismatch");
  double sum = 0.0;
  const std::size_t n = wf.valid.size();
  for (std::size_t p = 0; p < n; ++p) {
    if (!v.flags[p]) continue;
    const int x = static_cast<int>(p) % wf.width;
    const int y = static_cast<int>(p) / wf.width;
    const ColorSample s = sample_bilinear(image_j, wf.coords[p]);
    double px = 0.0;
    for (int c = 0; c < channels; ++c)
      px += std::abs(image_i.at(x, y, c) - s.value[static_cast<std::size_t>(c)]);
    sum += px / channels;
  }
  return sum / static_cast<double>(v.count);
}

double geometric_loss(const DepthMap& depth_j, const WarpField& wf, const ValidSet& v) {
  if (v.no_overlap()) return 0.0;
  double sum = 0.0;
  const std::size_t n = wf.valid.size();
  for (std::size_t p = 0; p < n; ++p) {
    if (!v.flags[p]) continue;
    const DepthSample s = sample_bilinear(depth_j, wf.coords[p]);
    sum += std::abs(s.value - wf.depth[p]) / (s.value + wf.depth[p]);
  }
  return sum / static_cast<double>(v.count);
}

double regularization_loss(std::span<const std::vector<double>> omega_per_frame) {
  double sum = 0.0;
  for (const auto& frame : omega_per_frame)
    for (double w : frame) sum += std::abs(1.0 - w);
  return sum;
}

LossBreakdown total_loss(double pc, double gc, double regu, const LossWeights& w) {
  LossBreakdown b;
  b.pc = pc;
  b.gc = gc;
  b.regu = regu;
  b.total = w.lambda_pc * pc + w.lambda_gc * gc + w.lambda_regu * regu;
  return b;
}

}  // namespace screcon
