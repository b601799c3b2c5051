#include "screcon/geometry.hpp"

#include <cstring>
#include <stdexcept>

namespace screcon {

double init_focal(int width, int height) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("init_focal: dimensions must be positive");
  return 1.2 * static_cast<double>(width > height ? width : height);
}

Mat3 intrinsics_matrix(const Intrinsics& intr) {
  if (!(intr.delta > 0.0))
    throw std::invalid_argument("intrinsics_matrix: delta must be positive");
  Mat3 K = Mat3::Zero();
  K(0, 0) = intr.focal();
  K(1, 1) = intr.focal();
  K(0, 2) = intr.cx();
  K(1, 2) = intr.cy();
  K(2, 2) = 1.0;
  return K;
}

Mat3 euler_to_rotation(const Vec3& r) {
  if (!r.allFinite()) throw std::invalid_argument("euler_to_rotation: non-finite angles");
  const Rot3T<double> R = euler_to_rotation_t<double>(r[0], r[1], r[2]);
  Mat3 out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = R.m[3 * i + j];
  return out;
}

Vec3 euler_from_rotation(const Mat3& R) {
  const double sb = std::clamp(R(0, 2), -1.0, 1.0);
  const double ry = std::asin(sb);
  if (std::abs(R(0, 2)) > 1.0 - 1e-12) {
    // cos(ry) ~ 0: only rx -/+ rz is determined; fix rz = 0.
    const double rx = sb > 0.0 ? std::atan2(R(1, 0), R(1, 1)) : std::atan2(-R(1, 0), R(1, 1));
    return Vec3(rx, ry, 0.0);
  }
  const double rx = std::atan2(-R(1, 2), R(2, 2));
  const double rz = std::atan2(-R(0, 1), R(0, 0));
  return Vec3(rx, ry, rz);
}

PoseMatrix make_relative_pose(const RelativePose& rp) {
  if (!rp.r.allFinite() || !rp.t.allFinite())
    throw std::invalid_argument("make_relative_pose: non-finite parameters");
  PoseMatrix P = PoseMatrix::Identity();
  P.block<3, 3>(0, 0) = euler_to_rotation(rp.r);
  P.block<3, 1>(0, 3) = rp.t;
  return P;
}

std::vector<PoseMatrix> chain_poses(std::span<const PoseMatrix> relatives) {
  std::vector<PoseMatrix> out;
  out.reserve(relatives.size() + 1);
  out.push_back(PoseMatrix::Identity());
  for (const PoseMatrix& rel : relatives) out.push_back(out.back() * rel);
  return out;
}

// ---- bilinear sampling ------------------------------------------------------

DepthSample sample_bilinear(const DepthMap& map, PixelCoord p) {
  DepthSample out;
  const BilinearSupport s = bilinear_support(p.u, p.v, map.width(), map.height());
  if (!s.in_rect) return out;
  // Only support pixels with nonzero weight participate; a masked pixel with
  // zero weight neither invalidates nor contributes.
  const bool need_x1 = s.fu > 0.0, need_y1 = s.fv > 0.0;
  if (!map.valid(s.x0, s.y0)) return out;
  if (need_x1 && !map.valid(s.x1, s.y0)) return out;
  if (need_y1 && !map.valid(s.x0, s.y1)) return out;
  if (need_x1 && need_y1 && !map.valid(s.x1, s.y1)) return out;
  const double v00 = map.at(s.x0, s.y0), v10 = map.at(s.x1, s.y0);
  const double v01 = map.at(s.x0, s.y1), v11 = map.at(s.x1, s.y1);
  const double top = v00 + s.fu * (v10 - v00);
  const double bot = v01 + s.fu * (v11 - v01);
  out.value = top + s.fv * (bot - top);
  out.valid = true;
  return out;
}

ColorSample sample_bilinear(const ImageBuffer& img, PixelCoord p) {
  ColorSample out;
  const BilinearSupport s = bilinear_support(p.u, p.v, img.width(), img.height());
  if (!s.in_rect) return out;
  for (int c = 0; c < img.channels(); ++c) {
    const double v00 = img.at(s.x0, s.y0, c), v10 = img.at(s.x1, s.y0, c);
    const double v01 = img.at(s.x0, s.y1, c), v11 = img.at(s.x1, s.y1, c);
    const double top = v00 + s.fu * (v10 - v00);
    const double bot = v01 + s.fu * (v11 - v01);
    out.value[static_cast<std::size_t>(c)] = top + s.fv * (bot - top);
  }
  out.valid = true;
  return out;
}

// ---- warping ----------------------------------------------------------------

WarpResult warp_point(PixelCoord p, double d, const Intrinsics& K, const PoseMatrix& pose_i,
                      const PoseMatrix& pose_j) {
  WarpResult out;
  if (!(d > 0.0)) return out;

  if (std::memcmp(pose_i.data(), pose_j.data(), sizeof(double) * 16) == 0) {
    // Identical poses compose to the exact identity; evaluating the matrix
    // chain would only add rounding noise, so map the point through directly.
    out.coord = p;
    out.depth = d;
    out.valid = d > kDepthEpsilon && p.u >= 0.0 && p.u <= K.width - 1 && p.v >= 0.0 &&
                p.v <= K.height - 1;
    return out;
  }

  Rot3T<double> Ri, Rj;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      Ri.m[3 * r + c] = pose_i(r, c);
      Rj.m[3 * r + c] = pose_j(r, c);
    }
  const Vec3T<double> ti{pose_i(0, 3), pose_i(1, 3), pose_i(2, 3)};
  const Vec3T<double> tj{pose_j(0, 3), pose_j(1, 3), pose_j(2, 3)};
  const RigidT<double> rel = relative_rigid(Ri, ti, Rj, tj);
  const double f = K.focal();
  const CameraT<double> cam{f, 1.0 / f, K.cx(), K.cy()};
  const WarpedPoint<double> w = warp_pixel(rel, cam, p.u, p.v, d);
  out.coord = PixelCoord{w.u, w.v};
  out.depth = w.depth;
  out.valid = w.depth > kDepthEpsilon && w.u >= 0.0 && w.u <= K.width - 1 && w.v >= 0.0 &&
              w.v <= K.height - 1;
  return out;
}

// ---- fused tape nodes --------------------------------------------------------

WarpedPoint<ad::Var> warp_pixel(const RigidT<ad::Var>& rel, const CameraT<ad::Var>& cam,
                                double u, double v, ad::Var d, bool snap_identity) {
  using ad::Var;
  ad::Tape* t = ad::active_tape();
  const double pu = u - cam.cx;
  const double pv = v - cam.cy;
  const double vinvf = t->value(cam.inv_f.idx);
  const Var rx{t->record1(pu * vinvf, cam.inv_f.idx, pu)};
  const Var ry{t->record1(pv * vinvf, cam.inv_f.idx, pv)};
  const double vrx = t->value(rx.idx);
  const double vry = t->value(ry.idx);

  // w_r = R[r0]*rx + R[r1]*ry + R[r2], one node per row.
  Var w[3];
  double vw[3];
  for (int r = 0; r < 3; ++r) {
    const Var m0 = rel.R.m[3 * r], m1 = rel.R.m[3 * r + 1], m2 = rel.R.m[3 * r + 2];
    const double v0 = t->value(m0.idx), v1 = t->value(m1.idx), v2 = t->value(m2.idx);
    vw[r] = v0 * vrx + v1 * vry + v2;
    const std::int32_t args[5] = {m0.idx, m1.idx, m2.idx, rx.idx, ry.idx};
    const double partials[5] = {vrx, vry, 1.0, v0, v1};
    w[r] = Var{t->record_n(vw[r], args, partials)};
  }

  // X_r = d * w_r + t_r
  const double vd = t->value(d.idx);
  Var X[3];
  double vX[3];
  const Var tr[3] = {rel.t.x, rel.t.y, rel.t.z};
  for (int r = 0; r < 3; ++r) {
    const double vt = t->value(tr[r].idx);
    vX[r] = vd * vw[r] + vt;
    X[r] = Var{t->record3(vX[r], d.idx, vw[r], w[r].idx, vd, tr[r].idx, 1.0)};
  }

  WarpedPoint<Var> out;
  out.depth = X[2];
  const double vz = vX[2];
  const double vinvz = 1.0 / vz;
  const Var inv_z{t->record1(vinvz, X[2].idx, -vinvz * vinvz)};
  const double vf = t->value(cam.f.idx);
  // u' = f * Xx * inv_z + cx. With snap_identity the caller guarantees the
  // relative transform is the exact identity; the node values are then the
  // exact fixed point (u, v) while the recorded partials are unchanged, so
  // derivatives still flow through the pose and focal arguments.
  const double vu = snap_identity ? u : vf * vX[0] * vinvz + cam.cx;
  const double vv2 = snap_identity ? v : vf * vX[1] * vinvz + cam.cy;
  out.u = Var{t->record3(vu, cam.f.idx, vX[0] * vinvz, X[0].idx,
                         vf * vinvz, inv_z.idx, vf * vX[0])};
  out.v = Var{t->record3(vv2, cam.f.idx, vX[1] * vinvz, X[1].idx,
                         vf * vinvz, inv_z.idx, vf * vX[1])};
  return out;
}

ad::Var sample_const_grid(const double* grid, int width, int height, int channels, int channel,
                          ad::Var u, ad::Var v) {
  ad::Tape* t = ad::active_tape();
  const double uu = t->value(u.idx);
  const double vv = t->value(v.idx);
  const BilinearSupport s = bilinear_support(uu, vv, width, height);
  assert(s.in_rect);
  const auto at = [&](int x, int y) {
    return grid[(static_cast<std::size_t>(y) * width + x) * channels + channel];
  };
  const double v00 = at(s.x0, s.y0), v10 = at(s.x1, s.y0);
  const double v01 = at(s.x0, s.y1), v11 = at(s.x1, s.y1);
  const double top = v00 + s.fu * (v10 - v00);
  const double bot = v01 + s.fu * (v11 - v01);
  const double val = top + s.fv * (bot - top);
  const double du = (1.0 - s.fv) * (v10 - v00) + s.fv * (v11 - v01);
  const double dv = bot - top;
  return ad::Var{t->record2(val, u.idx, du, v.idx, dv)};
}

ad::Var sample_var_grid(std::span<const ad::Var> grid, int width, int height, ad::Var u,
                        ad::Var v) {
  ad::Tape* t = ad::active_tape();
  const double uu = t->value(u.idx);
  const double vv = t->value(v.idx);
  const BilinearSupport s = bilinear_support(uu, vv, width, height);
  assert(s.in_rect);
  const ad::Var g00 = grid[static_cast<std::size_t>(s.y0) * width + s.x0];
  const ad::Var g10 = grid[static_cast<std::size_t>(s.y0) * width + s.x1];
  const ad::Var g01 = grid[static_cast<std::size_t>(s.y1) * width + s.x0];
  const ad::Var g11 = grid[static_cast<std::size_t>(s.y1) * width + s.x1];
  assert(g00.idx >= 0 && g10.idx >= 0 && g01.idx >= 0 && g11.idx >= 0);
  const double v00 = t->value(g00.idx), v10 = t->value(g10.idx);
  const double v01 = t->value(g01.idx), v11 = t->value(g11.idx);
  const double top = v00 + s.fu * (v10 - v00);
  const double bot = v01 + s.fu * (v11 - v01);
  const double val = top + s.fv * (bot - top);
  const double w00 = (1.0 - s.fu) * (1.0 - s.fv);
  const double w10 = s.fu * (1.0 - s.fv);
  const double w01 = (1.0 - s.fu) * s.fv;
  const double w11 = s.fu * s.fv;
  const double du = (1.0 - s.fv) * (v10 - v00) + s.fv * (v11 - v01);
  const double dv = bot - top;
  const std::int32_t args[6] = {g00.idx, g10.idx, g01.idx, g11.idx, u.idx, v.idx};
  const double partials[6] = {w00, w10, w01, w11, du, dv};
  return ad::Var{t->record_n(val, args, partials)};
}

}  // namespace screcon
