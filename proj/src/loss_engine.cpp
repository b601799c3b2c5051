#include "screcon/loss_engine.hpp"

#include <cassert>
#include <cmath>
#include <cstddef>

namespace screcon {

namespace {

using ad::Var;
using ad::value_of;

// ---- small generic linear algebra over S in {double, Var} -------------------

template <class S>
Rot3T<S> mat_mul(const Rot3T<S>& A, const Rot3T<S>& B) {
  Rot3T<S> C;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      C.m[3 * r + c] =
          A.m[3 * r] * B.m[c] + A.m[3 * r + 1] * B.m[3 + c] + A.m[3 * r + 2] * B.m[6 + c];
  return C;
}

template <class S>
Vec3T<S> rotate_add(const Rot3T<S>& A, const Vec3T<S>& x, const Vec3T<S>& b) {
  return Vec3T<S>{A.m[0] * x.x + A.m[1] * x.y + A.m[2] * x.z + b.x,
                  A.m[3] * x.x + A.m[4] * x.y + A.m[5] * x.z + b.y,
                  A.m[6] * x.x + A.m[7] * x.y + A.m[8] * x.z + b.z};
}

template <class S>
struct WorldPose {
  Rot3T<S> R;
  Vec3T<S> t;
};

// Camera-to-world pose per frame: frame 0 is the identity, frame f composes
// the chain of relative transforms. With frozen poses the caller-provided
// matrices are lifted verbatim, so the pose parameters never enter the graph.
template <class S>
std::vector<WorldPose<S>> build_world_poses(const EngineProblem& P, std::span<const S> params) {
  using ad::make_scalar;
  const int F = P.layout.frames;
  std::vector<WorldPose<S>> wp(static_cast<std::size_t>(F));
  if (P.freeze_poses) {
    if (static_cast<int>(P.fixed_poses.size()) != F)
      throw std::invalid_argument("loss engine: fixed pose count does not match frame count");
    for (int f = 0; f < F; ++f) {
      const PoseMatrix& M = P.fixed_poses[static_cast<std::size_t>(f)];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) wp[f].R.m[3 * r + c] = make_scalar<S>(M(r, c));
      wp[f].t = Vec3T<S>{make_scalar<S>(M(0, 3)), make_scalar<S>(M(1, 3)),
                         make_scalar<S>(M(2, 3))};
    }
    return wp;
  }
  for (int k = 0; k < 9; ++k) wp[0].R.m[k] = make_scalar<S>(k % 4 == 0 ? 1.0 : 0.0);
  wp[0].t = Vec3T<S>{make_scalar<S>(0.0), make_scalar<S>(0.0), make_scalar<S>(0.0)};
  for (int f = 1; f < F; ++f) {
    const int p = f - 1;
    const Rot3T<S> Rrel = euler_to_rotation_t<S>(params[P.layout.pose(p, 0)],
                                                 params[P.layout.pose(p, 1)],
                                                 params[P.layout.pose(p, 2)]);
    const Vec3T<S> trel{params[P.layout.pose(p, 3)], params[P.layout.pose(p, 4)],
                        params[P.layout.pose(p, 5)]};
    wp[f].R = mat_mul(wp[f - 1].R, Rrel);
    wp[f].t = rotate_add(wp[f - 1].R, trel, wp[f - 1].t);
  }
  return wp;
}

// Exact-identity test on current values. Identity chains keep their entries
// exactly 0/1 under composition, so at an all-zero pose initialization each
// pair qualifies and its warp can be snapped to the exact fixed point.
template <class S>
bool exact_identity_rel(const RigidT<S>& rel) {
  for (int k = 0; k < 9; ++k) {
    const double want = k % 4 == 0 ? 1.0 : 0.0;
    if (value_of(rel.R.m[k]) != want) return false;
  }
  return value_of(rel.t.x) == 0.0 && value_of(rel.t.y) == 0.0 && value_of(rel.t.z) == 0.0;
}

// ---- target depth sampling support -------------------------------------------

// Bilinear support over the rectified target depth with zero-weight corners
// collapsed, so they are neither read nor allowed to invalidate the sample.
struct DepthSupport {
  std::size_t i00 = 0, i10 = 0, i01 = 0, i11 = 0;
  double w00 = 0.0, w10 = 0.0, w01 = 0.0, w11 = 0.0;
  double fu = 0.0, fv = 0.0;
  double value = 0.0;  // sample of the current values
  bool ok = false;
};

template <class S>
DepthSupport depth_support(double u, double v, int W, int H, const std::vector<S>& depth,
                           const std::vector<std::uint8_t>& valid) {
  DepthSupport d;
  const BilinearSupport bs = bilinear_support(u, v, W, H);
  if (!bs.in_rect) return d;
  const int x1 = bs.fu == 0.0 ? bs.x0 : bs.x1;
  const int y1 = bs.fv == 0.0 ? bs.y0 : bs.y1;
  d.i00 = static_cast<std::size_t>(bs.y0) * W + bs.x0;
  d.i10 = static_cast<std::size_t>(bs.y0) * W + x1;
  d.i01 = static_cast<std::size_t>(y1) * W + bs.x0;
  d.i11 = static_cast<std::size_t>(y1) * W + x1;
  if (!valid[d.i00] || !valid[d.i10] || !valid[d.i01] || !valid[d.i11]) return d;
  d.fu = bs.fu;
  d.fv = bs.fv;
  d.w00 = (1.0 - bs.fu) * (1.0 - bs.fv);
  d.w10 = bs.fu * (1.0 - bs.fv);
  d.w01 = (1.0 - bs.fu) * bs.fv;
  d.w11 = bs.fu * bs.fv;
  d.value = d.w00 * value_of(depth[d.i00]) + d.w10 * value_of(depth[d.i10]) +
            d.w01 * value_of(depth[d.i01]) + d.w11 * value_of(depth[d.i11]);
  d.ok = true;
  return d;
}

// ---- fused residuals ----------------------------------------------------------

// Photometric term at one pixel: mean over channels of |I_i(p) - I_j(u, v)|
// with I_j sampled bilinearly. Value and coordinate partials in one pass.
struct PhotoEval {
  double value = 0.0;
  double du = 0.0;
  double dv = 0.0;
};

inline PhotoEval photo_eval(const ImageBuffer& img, const double* src, double u, double v) {
  const int W = img.width(), H = img.height(), C = img.channels();
  const BilinearSupport s = bilinear_support(u, v, W, H);
  assert(s.in_rect);
  const double* data = img.data().data();
  const std::size_t i00 = (static_cast<std::size_t>(s.y0) * W + s.x0) * C;
  const std::size_t i10 = (static_cast<std::size_t>(s.y0) * W + s.x1) * C;
  const std::size_t i01 = (static_cast<std::size_t>(s.y1) * W + s.x0) * C;
  const std::size_t i11 = (static_cast<std::size_t>(s.y1) * W + s.x1) * C;
  const double w00 = (1.0 - s.fu) * (1.0 - s.fv);
  const double w10 = s.fu * (1.0 - s.fv);
  const double w01 = (1.0 - s.fu) * s.fv;
  const double w11 = s.fu * s.fv;
  PhotoEval out;
  for (int c = 0; c < C; ++c) {
    const double g00 = data[i00 + c], g10 = data[i10 + c];
    const double g01 = data[i01 + c], g11 = data[i11 + c];
    const double sc = w00 * g00 + w10 * g10 + w01 * g01 + w11 * g11;
    const double diff = sc - src[c];
    const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    out.value += std::abs(diff);
    out.du += sgn * ((1.0 - s.fv) * (g10 - g00) + s.fv * (g11 - g01));
    out.dv += sgn * ((1.0 - s.fu) * (g01 - g00) + s.fu * (g11 - g10));
  }
  const double inv_c = 1.0 / C;
  out.value *= inv_c;
  out.du *= inv_c;
  out.dv *= inv_c;
  return out;
}

inline double photometric_residual(const ImageBuffer& img, const double* src, double u, double v,
                                   double /*skew*/) {
  return photo_eval(img, src, u, v).value;
}

inline Var photometric_residual(const ImageBuffer& img, const double* src, Var u, Var v,
                                double skew) {
  ad::Tape* t = ad::active_tape();
  const PhotoEval e = photo_eval(img, src, t->value(u.idx), t->value(v.idx));
  return Var{t->record2(e.value, u.idx, skew * e.du, v.idx, e.dv)};
}

// Geometric term at one pixel: r = |s - d| / (s + d), s the bilinear sample
// of the rectified target depth at (u, v), d the warped source depth.
inline double geometric_residual(const std::vector<double>& depth, const DepthSupport& sp,
                                 double /*u*/, double /*v*/, double d) {
  const double s = sp.w00 * depth[sp.i00] + sp.w10 * depth[sp.i10] + sp.w01 * depth[sp.i01] +
                   sp.w11 * depth[sp.i11];
  return std::abs(s - d) / (s + d);
}

inline Var geometric_residual(const std::vector<Var>& depth, const DepthSupport& sp, Var u, Var v,
                              Var d) {
  ad::Tape* t = ad::active_tape();
  const double c00 = t->value(depth[sp.i00].idx), c10 = t->value(depth[sp.i10].idx);
  const double c01 = t->value(depth[sp.i01].idx), c11 = t->value(depth[sp.i11].idx);
  const double s = sp.w00 * c00 + sp.w10 * c10 + sp.w01 * c01 + sp.w11 * c11;
  const double dv = t->value(d.idx);
  const double diff = s - dv;
  const double denom = s + dv;
  const double r = std::abs(diff) / denom;
  const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  const double inv_d2 = 1.0 / (denom * denom);
  const double drds = sgn * 2.0 * dv * inv_d2;
  const double drdd = -sgn * 2.0 * s * inv_d2;
  const double su = (1.0 - sp.fv) * (c10 - c00) + sp.fv * (c11 - c01);
  const double sv = (1.0 - sp.fu) * (c01 - c00) + sp.fu * (c11 - c10);
  const std::int32_t args[7] = {depth[sp.i00].idx, depth[sp.i10].idx, depth[sp.i01].idx,
                                depth[sp.i11].idx, u.idx, v.idx, d.idx};
  const double partials[7] = {drds * sp.w00, drds * sp.w10, drds * sp.w01, drds * sp.w11,
                              drds * su, drds * sv, drdd};
  return Var{t->record_n(r, args, partials)};
}

// ---- reductions ----------------------------------------------------------------

inline double reduce_scaled(const std::vector<double>& terms, double w) {
  double s = 0.0;
  for (double x : terms) s += x;
  return s * w;
}

inline Var reduce_scaled(const std::vector<Var>& terms, double w) {
  static thread_local std::vector<double> coeffs;
  coeffs.assign(terms.size(), w);
  return ad::linear_combination(terms, coeffs, 0.0);
}

inline double combine_total(double pc, double gc, double regu, const LossWeights& w) {
  return w.lambda_pc * pc + w.lambda_gc * gc + w.lambda_regu * regu;
}

inline Var combine_total(Var pc, Var gc, Var regu, const LossWeights& w) {
  const Var xs[3] = {pc, gc, regu};
  const double cs[3] = {w.lambda_pc, w.lambda_gc, w.lambda_regu};
  return ad::linear_combination(std::span<const Var>(xs, 3), std::span<const double>(cs, 3), 0.0);
}

// ---- core evaluation ------------------------------------------------------------

template <class S>
S loss_core(const EngineProblem& P, std::span<const S> params,
            std::span<const std::pair<int, int>> pairs, const LossWeights& weights,
            LossBreakdown* bd, EvalStats* stats) {
  using ad::make_scalar;
  using ad::softplus;
  using std::abs;
  using ad::abs;

  const int F = P.layout.frames;
  const int M = P.layout.anchors;
  const int W = P.width, H = P.height;
  if (static_cast<int>(params.size()) != P.layout.size())
    throw std::invalid_argument("loss engine: parameter vector size mismatch");
  if (static_cast<int>(P.frames.size()) != F)
    throw std::invalid_argument("loss engine: frame count mismatch");
  for (const auto& [i, j] : pairs)
    if (i < 0 || i >= F || j < 0 || j >= F)
      throw std::invalid_argument("loss engine: pair index out of range");

  const double delta_val = value_of(params[static_cast<std::size_t>(P.layout.delta())]);
  if (!(std::isfinite(delta_val) && delta_val > 0.0))
    throw NonFiniteLossError(-1, -1, "focal scale is not positive");

  CameraT<S> cam;
  cam.f = params[static_cast<std::size_t>(P.layout.delta())] * P.f0;
  cam.inv_f = 1.0 / cam.f;
  cam.cx = W / 2.0;
  cam.cy = H / 2.0;

  const std::vector<WorldPose<S>> world = build_world_poses<S>(P, params);

  // Rectified depth per frame, rebuilt every evaluation (it depends on the
  // current alpha/beta/omega). Buffers are reused across calls.
  static thread_local std::vector<RectifiedFrame<S>> rect;
  rect.resize(static_cast<std::size_t>(F));
  static thread_local std::vector<S> omega_buf;
  for (int f = 0; f < F; ++f) {
    const EngineFrame& fr = P.frames[static_cast<std::size_t>(f)];
    const S alpha = softplus(params[static_cast<std::size_t>(P.layout.alpha_raw(f))]);
    const S beta = params[static_cast<std::size_t>(P.layout.beta(f))];
    omega_buf.clear();
    for (int slot : fr.anchor_slot)
      omega_buf.push_back(params[static_cast<std::size_t>(P.layout.omega(f, slot))]);
    rectify_frame<S>(fr.geo, fr.affine->data(), fr.affine->validity(), fr.anchor_u, fr.anchor_v,
                     alpha, beta, omega_buf, rect[static_cast<std::size_t>(f)]);
  }

  // Regularizer over every omega slot of every frame, dropped anchors included.
  static thread_local std::vector<S> regu_terms;
  regu_terms.clear();
  for (int f = 0; f < F; ++f)
    for (int t = 0; t < M; ++t)
      regu_terms.push_back(abs(1.0 - params[static_cast<std::size_t>(P.layout.omega(f, t))]));
  const S regu = reduce_scaled(regu_terms, 1.0);

  static thread_local std::vector<S> pair_pc, pair_gc, pc_terms, gc_terms;
  pair_pc.clear();
  pair_gc.clear();
  int empty_pairs = 0;
  std::size_t residual_count = 0;
  for (const auto& [i, j] : pairs) {
    const EngineFrame& Fi = P.frames[static_cast<std::size_t>(i)];
    const RectifiedFrame<S>& ri = rect[static_cast<std::size_t>(i)];
    const RectifiedFrame<S>& rj = rect[static_cast<std::size_t>(j)];
    const ImageBuffer& img_j = *P.frames[static_cast<std::size_t>(j)].image;
    const RigidT<S> rel =
        relative_rigid(world[static_cast<std::size_t>(i)].R, world[static_cast<std::size_t>(i)].t,
                       world[static_cast<std::size_t>(j)].R, world[static_cast<std::size_t>(j)].t);
    const bool snap = exact_identity_rel(rel);
    const double* img_i = Fi.image->data().data();
    const int C = Fi.image->channels();

    pc_terms.clear();
    gc_terms.clear();
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        if (!ri.valid[p]) continue;
        if (Fi.mask && !Fi.mask->eligible(x, y)) continue;
        const S d = ri.depth[p];
        const WarpedPoint<S> wpt =
            warp_pixel(rel, cam, static_cast<double>(x), static_cast<double>(y), d, snap);
        const double wd = value_of(wpt.depth);
        if (!(wd > kDepthEpsilon)) continue;
        const double wu = value_of(wpt.u), wv = value_of(wpt.v);
        if (!(wu >= 0.0 && wu <= W - 1 && wv >= 0.0 && wv <= H - 1)) continue;
        const DepthSupport sp = depth_support<S>(wu, wv, W, H, rj.depth, rj.valid);
        if (!sp.ok) continue;
        if (!(sp.value + wd >= 2.0 * kDepthEpsilon)) continue;
        pc_terms.push_back(
            photometric_residual(img_j, img_i + p * C, wpt.u, wpt.v, P.debug_grad_skew));
        gc_terms.push_back(geometric_residual(rj.depth, sp, wpt.u, wpt.v, d));
      }
    }
    if (pc_terms.empty()) {
      ++empty_pairs;
      continue;
    }
    residual_count += pc_terms.size();
    const double inv_n = 1.0 / static_cast<double>(pc_terms.size());
    const S pc = reduce_scaled(pc_terms, inv_n);
    const S gc = reduce_scaled(gc_terms, inv_n);
    if (!std::isfinite(value_of(pc)) || !std::isfinite(value_of(gc)))
      throw NonFiniteLossError(i, j, "non-finite photometric/geometric pair loss");
    pair_pc.push_back(pc);
    pair_gc.push_back(gc);
  }

  const double inv_pairs = pairs.empty() ? 0.0 : 1.0 / static_cast<double>(pairs.size());
  const S pc_mean = reduce_scaled(pair_pc, inv_pairs);
  const S gc_mean = reduce_scaled(pair_gc, inv_pairs);
  const S total = combine_total(pc_mean, gc_mean, regu, weights);

  if (!std::isfinite(value_of(total)))
    throw NonFiniteLossError(-1, -1, "non-finite total loss");
  if (bd) {
    bd->pc = value_of(pc_mean);
    bd->gc = value_of(gc_mean);
    bd->regu = value_of(regu);
    bd->total = value_of(total);
  }
  if (stats) {
    stats->pairs = static_cast<int>(pairs.size());
    stats->empty_pairs = empty_pairs;
    stats->residuals = residual_count;
  }
  return total;
}

}  // namespace

const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::AlphaRaw: return "alpha";
    case ParamGroup::Beta: return "beta";
    case ParamGroup::Omega: return "omega";
    case ParamGroup::Rotation: return "rotation";
    case ParamGroup::Translation: return "translation";
    case ParamGroup::Delta: return "delta";
  }
  return "unknown";
}

ParamGroup group_of(const ParamLayout& layout, int index) {
  if (index < 0 || index >= layout.size())
    throw std::out_of_range("group_of: parameter index out of range");
  if (index == layout.delta()) return ParamGroup::Delta;
  if (index >= layout.pose_offset()) {
    const int c = (index - layout.pose_offset()) % 6;
    return c < 3 ? ParamGroup::Rotation : ParamGroup::Translation;
  }
  switch (index % layout.frame_stride()) {
    case 0: return ParamGroup::AlphaRaw;
    case 1: return ParamGroup::Beta;
    default: return ParamGroup::Omega;
  }
}

std::vector<double> init_params(const ParamLayout& layout) {
  if (layout.frames < 2) throw std::invalid_argument("init_params: need at least two frames");
  if (layout.anchors < 1) throw std::invalid_argument("init_params: need at least one anchor");
  std::vector<double> p(static_cast<std::size_t>(layout.size()), 0.0);
  const double alpha_raw = ad::softplus_inverse(1.0);
  for (int f = 0; f < layout.frames; ++f) {
    p[static_cast<std::size_t>(layout.alpha_raw(f))] = alpha_raw;
    for (int t = 0; t < layout.anchors; ++t)
      p[static_cast<std::size_t>(layout.omega(f, t))] = 1.0;
  }
  p[static_cast<std::size_t>(layout.delta())] = 1.0;
  return p;
}

EngineFrame make_engine_frame(const ImageBuffer* image, const DepthMap* affine,
                              const PixelMask* mask, int anchor_count, const LwlrConfig& lwlr) {
  if (!image || !affine) throw std::invalid_argument("make_engine_frame: null inputs");
  if (affine->stage() != DepthStage::AffineInvariant)
    throw std::invalid_argument("make_engine_frame: depth must be at the AffineInvariant stage");
  const int W = affine->width(), H = affine->height();
  if (image->width() != W || image->height() != H)
    throw std::invalid_argument("make_engine_frame: image/depth size mismatch");
  if (mask && !mask->empty() && (mask->width() != W || mask->height() != H))
    throw std::invalid_argument("make_engine_frame: mask size mismatch");

  EngineFrame f;
  f.image = image;
  f.affine = affine;
  f.mask = (mask && !mask->empty()) ? mask : nullptr;

  std::vector<int> gu, gv;
  anchor_grid(W, H, anchor_count, gu, gv);
  for (std::size_t t = 0; t < gu.size(); ++t) {
    const std::size_t pix = static_cast<std::size_t>(gv[t]) * W + gu[t];
    if (!affine->valid_at(pix)) continue;
    f.anchor_u.push_back(gu[t]);
    f.anchor_v.push_back(gv[t]);
    f.anchor_slot.push_back(static_cast<int>(t));
  }
  if (f.anchor_u.size() < 2)
    throw std::invalid_argument("make_engine_frame: fewer than two anchors on valid pixels");

  LwlrConfig cfg = lwlr;
  if (!(cfg.bandwidth > 0.0)) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(anchor_count))));
    cfg.bandwidth = default_bandwidth(W, H, side);
  }
  f.geo = build_align_geometry(W, H, f.anchor_u, f.anchor_v, cfg);
  return f;
}

double evaluate_loss(const EngineProblem& prob, std::span<const double> params,
                     std::span<const std::pair<int, int>> pairs, const LossWeights& weights,
                     LossBreakdown* breakdown, EvalStats* stats) {
  return loss_core<double>(prob, params, pairs, weights, breakdown, stats);
}

double compute_gradients(const EngineProblem& prob, std::span<const double> params,
                         std::span<const std::pair<int, int>> pairs, const LossWeights& weights,
                         std::span<const std::uint8_t> frozen, std::vector<double>& grad,
                         LossBreakdown* breakdown, EvalStats* stats) {
  const int n = prob.layout.size();
  if (static_cast<int>(params.size()) != n)
    throw std::invalid_argument("compute_gradients: parameter vector size mismatch");
  if (!frozen.empty() && static_cast<int>(frozen.size()) != n)
    throw std::invalid_argument("compute_gradients: frozen mask size mismatch");

  static thread_local ad::Tape tape;
  ad::TapeScope scope(tape);
  tape.rewind();
  static thread_local std::vector<ad::Var> vars;
  vars.clear();
  vars.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    vars.push_back(ad::Var{tape.leaf(params[static_cast<std::size_t>(i)])});

  const ad::Var total =
      loss_core<ad::Var>(prob, std::span<const ad::Var>(vars), pairs, weights, breakdown, stats);
  const double total_value = tape.value(total.idx);
  tape.backward(total.idx);

  grad.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    if (!frozen.empty() && frozen[static_cast<std::size_t>(i)]) continue;
    grad[static_cast<std::size_t>(i)] = tape.adjoint(vars[static_cast<std::size_t>(i)].idx);
  }
  for (double g : grad)
    if (!std::isfinite(g)) throw NonFiniteLossError(-1, -1, "non-finite gradient");
  return total_value;
}

}  // namespace screcon
