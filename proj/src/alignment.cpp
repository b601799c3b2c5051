#include "screcon/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace screcon {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;  // 1 / sqrt(2*pi)

int exact_isqrt(int n) {
  const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  if (r * r != n) throw std::invalid_argument("anchor count must be a perfect square");
  return r;
}

std::vector<int> coarse_positions(int extent, int stride) {
  std::vector<int> xs;
  for (int x = 0; x < extent; x += stride) xs.push_back(x);
  if (xs.back() != extent - 1) xs.push_back(extent - 1);
  return xs;
}

// Valid anchors compacted for a solve: parallel coordinate/depth/target rows.
struct ActiveAnchors {
  std::vector<int> u, v;
  std::vector<double> depth, target;
};

ActiveAnchors compact_anchors(const AnchorSet& anchors, std::span<const double> targets) {
  ActiveAnchors a;
  for (std::size_t t = 0; t < anchors.size(); ++t) {
    if (!anchors.valid[t]) continue;
    a.u.push_back(anchors.u[t]);
    a.v.push_back(anchors.v[t]);
    a.depth.push_back(anchors.depths[t]);
    a.target.push_back(targets.empty() ? 0.0 : targets[t]);
  }
  return a;
}

double resolve_bandwidth(const LwlrConfig& cfg, int width, int height, int grid_side) {
  if (cfg.bandwidth > 0.0) return cfg.bandwidth;
  const int side = grid_side > 0 ? grid_side : 1;
  return default_bandwidth(width, height, side);
}

}  // namespace

double default_bandwidth(int width, int height, int grid_side) {
  if (grid_side < 1) throw std::invalid_argument("default_bandwidth: grid side must be positive");
  const double s = static_cast<double>(grid_side);
  return 0.5 * (static_cast<double>(width) / s + static_cast<double>(height) / s);
}

DepthMap global_align(const DepthMap& affine_depth, const GlobalAffine& g) {
  if (affine_depth.stage() != DepthStage::AffineInvariant)
    throw std::invalid_argument("global_align: input must be at the AffineInvariant stage");
  if (!(g.alpha > 0.0) || !std::isfinite(g.alpha) || !std::isfinite(g.beta))
    throw std::invalid_argument("global_align: scale must be positive and finite");

  DepthMap out(affine_depth.width(), affine_depth.height(), DepthStage::GloballyAligned);
  const std::size_t n = affine_depth.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!affine_depth.valid_at(i)) {
      out.data()[i] = affine_depth.data()[i];
      out.validity()[i] = 0;
      continue;
    }
    const double d = g.alpha * affine_depth.data()[i] + g.beta;
    out.data()[i] = d;
    out.validity()[i] = d > kDepthEpsilon ? 1 : 0;
  }
  return out;
}

void anchor_grid(int width, int height, int anchor_count, std::vector<int>& u,
                 std::vector<int>& v) {
  if (anchor_count < 1) throw std::invalid_argument("anchor_grid: need at least one anchor");
  const int side = exact_isqrt(anchor_count);
  if (width < side || height < side)
    throw std::invalid_argument("anchor_grid: map smaller than the anchor grid");
  u.clear();
  v.clear();
  for (int row = 0; row < side; ++row) {
    const int av = static_cast<int>(std::floor((row + 0.5) * height / side));
    for (int col = 0; col < side; ++col) {
      u.push_back(static_cast<int>(std::floor((col + 0.5) * width / side)));
      v.push_back(av);
    }
  }
}

AnchorSet sample_anchors(const DepthMap& global_depth, int anchor_count) {
  if (global_depth.stage() != DepthStage::GloballyAligned)
    throw std::invalid_argument("sample_anchors: input must be at the GloballyAligned stage");

  AnchorSet set;
  anchor_grid(global_depth.width(), global_depth.height(), anchor_count, set.u, set.v);
  set.grid_side = exact_isqrt(anchor_count);
  set.omega.assign(set.u.size(), 1.0);
  refresh_anchor_depths(set, global_depth);
  if (std::ranges::count(set.valid, std::uint8_t{1}) == 0)
    throw std::invalid_argument("sample_anchors: every anchor landed on an invalid pixel");
  return set;
}

void refresh_anchor_depths(AnchorSet& anchors, const DepthMap& global_depth) {
  const std::size_t n = anchors.size();
  anchors.depths.resize(n);
  anchors.valid.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const int u = anchors.u[t], v = anchors.v[t];
    anchors.depths[t] = global_depth.at(u, v);
    anchors.valid[t] = global_depth.valid(u, v) ? 1 : 0;
  }
}

AlignGeometry build_align_geometry(int width, int height, std::span<const int> anchor_u,
                                   std::span<const int> anchor_v, const LwlrConfig& cfg) {
  if (width < 1 || height < 1) throw std::invalid_argument("align geometry: empty image");
  if (cfg.stride < 1) throw std::invalid_argument("align geometry: stride must be >= 1");
  if (!(cfg.bandwidth > 0.0)) throw std::invalid_argument("align geometry: bandwidth must be > 0");
  if (cfg.lambda < 0.0) throw std::invalid_argument("align geometry: ridge must be >= 0");

  AlignGeometry geo;
  geo.width = width;
  geo.height = height;
  geo.lambda = cfg.lambda;
  geo.xs = coarse_positions(width, cfg.stride);
  geo.ys = coarse_positions(height, cfg.stride);
  const int nx = static_cast<int>(geo.xs.size());
  const int ny = static_cast<int>(geo.ys.size());
  geo.n_loc = nx * ny;
  geo.n_anchor = static_cast<int>(anchor_u.size());

  const double inv_two_b2 = 1.0 / (2.0 * cfg.bandwidth * cfg.bandwidth);
  geo.w.resize(static_cast<std::size_t>(geo.n_loc) * static_cast<std::size_t>(geo.n_anchor));
  geo.sw.resize(static_cast<std::size_t>(geo.n_loc));
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const std::size_t loc = static_cast<std::size_t>(iy) * nx + ix;
      double* row = geo.w.data() + loc * static_cast<std::size_t>(geo.n_anchor);
      double sum = 0.0;
      for (int t = 0; t < geo.n_anchor; ++t) {
        const double du = geo.xs[static_cast<std::size_t>(ix)] - anchor_u[static_cast<std::size_t>(t)];
        const double dv = geo.ys[static_cast<std::size_t>(iy)] - anchor_v[static_cast<std::size_t>(t)];
        const double wt = kInvSqrt2Pi * std::exp(-(du * du + dv * dv) * inv_two_b2);
        row[t] = wt;
        sum += wt;
      }
      geo.sw[loc] = sum;
    }
  }

  // Bilinear upsample plan from the coarse grid back to every pixel.
  const std::size_t n_px = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  geo.up_idx.resize(n_px * 4);
  geo.up_w.resize(n_px * 4);
  for (int y = 0; y < height; ++y) {
    int iy = ny > 1 ? std::min(y / cfg.stride, ny - 2) : 0;
    const int y0 = geo.ys[static_cast<std::size_t>(iy)];
    const int y1 = geo.ys[static_cast<std::size_t>(std::min(iy + 1, ny - 1))];
    const double fv = y1 > y0 ? static_cast<double>(y - y0) / (y1 - y0) : 0.0;
    for (int x = 0; x < width; ++x) {
      int ix = nx > 1 ? std::min(x / cfg.stride, nx - 2) : 0;
      const int x0 = geo.xs[static_cast<std::size_t>(ix)];
      const int x1 = geo.xs[static_cast<std::size_t>(std::min(ix + 1, nx - 1))];
      const double fu = x1 > x0 ? static_cast<double>(x - x0) / (x1 - x0) : 0.0;
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      const int ix1 = std::min(ix + 1, nx - 1);
      const int iy1 = std::min(iy + 1, ny - 1);
      geo.up_idx[p * 4 + 0] = static_cast<std::int32_t>(iy * nx + ix);
      geo.up_idx[p * 4 + 1] = static_cast<std::int32_t>(iy * nx + ix1);
      geo.up_idx[p * 4 + 2] = static_cast<std::int32_t>(iy1 * nx + ix);
      geo.up_idx[p * 4 + 3] = static_cast<std::int32_t>(iy1 * nx + ix1);
      geo.up_w[p * 4 + 0] = (1.0 - fu) * (1.0 - fv);
      geo.up_w[p * 4 + 1] = fu * (1.0 - fv);
      geo.up_w[p * 4 + 2] = (1.0 - fu) * fv;
      geo.up_w[p * 4 + 3] = fu * fv;
    }
  }
  return geo;
}

LocalAffineMaps lwlr_solve(const DepthMap& global_depth, const AnchorSet& anchors,
                           std::span<const double> targets, const LwlrConfig& cfg) {
  if (global_depth.stage() != DepthStage::GloballyAligned)
    throw std::invalid_argument("lwlr_solve: input must be at the GloballyAligned stage");
  if (targets.size() != anchors.size())
    throw std::invalid_argument("lwlr_solve: one target per anchor required");

  const ActiveAnchors act = compact_anchors(anchors, targets);
  if (act.u.size() < 2)
    throw std::invalid_argument("lwlr_solve: needs at least 2 valid anchors");

  LwlrConfig resolved = cfg;
  resolved.bandwidth =
      resolve_bandwidth(cfg, global_depth.width(), global_depth.height(), anchors.grid_side);
  const AlignGeometry geo =
      build_align_geometry(global_depth.width(), global_depth.height(), act.u, act.v, resolved);

  const std::size_t n_anchor = act.u.size();
  std::vector<double> coarse_s(static_cast<std::size_t>(geo.n_loc));
  std::vector<double> coarse_t(static_cast<std::size_t>(geo.n_loc));
  bool fallback = false;
  std::vector<double> dd(n_anchor), dy(n_anchor);
  for (std::size_t t = 0; t < n_anchor; ++t) {
    dd[t] = act.depth[t] * act.depth[t];
    dy[t] = act.depth[t] * act.target[t];
  }
  for (int loc = 0; loc < geo.n_loc; ++loc) {
    std::span<const double> w(geo.w.data() + static_cast<std::size_t>(loc) * n_anchor, n_anchor);
    const double sxx = ad::dot(dd, w);
    const double sx = ad::dot(act.depth, w);
    const double sxy = ad::dot(dy, w);
    const double sy = ad::dot(act.target, w);
    detail::solve_location(sxx, sx, sxy, sy, geo.sw[static_cast<std::size_t>(loc)], geo.lambda,
                           coarse_s[static_cast<std::size_t>(loc)],
                           coarse_t[static_cast<std::size_t>(loc)], &fallback);
  }

  LocalAffineMaps maps;
  maps.width = geo.width;
  maps.height = geo.height;
  maps.fallback_used = fallback;
  const std::size_t n_px = static_cast<std::size_t>(geo.width) * static_cast<std::size_t>(geo.height);
  maps.scale.resize(n_px);
  maps.shift.resize(n_px);
  for (std::size_t p = 0; p < n_px; ++p) {
    const std::int32_t* idx = geo.up_idx.data() + p * 4;
    const double* wq = geo.up_w.data() + p * 4;
    maps.scale[p] = ad::blend4(coarse_s[static_cast<std::size_t>(idx[0])],
                               coarse_s[static_cast<std::size_t>(idx[1])],
                               coarse_s[static_cast<std::size_t>(idx[2])],
                               coarse_s[static_cast<std::size_t>(idx[3])], wq);
    maps.shift[p] = ad::blend4(coarse_t[static_cast<std::size_t>(idx[0])],
                               coarse_t[static_cast<std::size_t>(idx[1])],
                               coarse_t[static_cast<std::size_t>(idx[2])],
                               coarse_t[static_cast<std::size_t>(idx[3])], wq);
  }
  return maps;
}

DepthMap consistency_align(const DepthMap& affine_depth, const GlobalAffine& g,
                           const AnchorSet& anchors, const LwlrConfig& cfg,
                           LocalAffineMaps* maps_out) {
  DepthMap global = global_align(affine_depth, g);

  AnchorSet fresh = anchors;
  refresh_anchor_depths(fresh, global);
  std::vector<double> targets(fresh.size());
  for (std::size_t t = 0; t < fresh.size(); ++t) targets[t] = fresh.omega[t] * fresh.depths[t];

  LocalAffineMaps maps = lwlr_solve(global, fresh, targets, cfg);

  DepthMap out(global.width(), global.height(), DepthStage::ScaleConsistent);
  const std::size_t n = global.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!global.valid_at(i)) {
      out.data()[i] = global.data()[i];
      out.validity()[i] = 0;
      continue;
    }
    const double d = maps.scale[i] * global.data()[i] + maps.shift[i];
    out.data()[i] = d;
    out.validity()[i] = d > kDepthEpsilon ? 1 : 0;
  }
  if (maps_out) *maps_out = std::move(maps);
  return out;
}

}  // namespace screcon
