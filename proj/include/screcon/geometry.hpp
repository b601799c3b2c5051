#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "screcon/image.hpp"
#include "screcon/tape.hpp"

namespace screcon {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
// Camera-to-world rigid transform; rotation block orthonormal (det +1),
// bottom row exactly [0,0,0,1].
using PoseMatrix = Eigen::Matrix4d;

// Base focal assumption for an uncalibrated camera: 1.2 * max(W, H).
double init_focal(int width, int height);

// Pinhole model with one learnable scalar: fx = fy = delta * f0, principal
// point fixed at the image center.
struct Intrinsics {
  double delta = 1.0;
  double f0 = 0.0;
  int width = 0;
  int height = 0;

  double focal() const { return delta * f0; }
  double cx() const { return width / 2.0; }
  double cy() const { return height / 2.0; }
};

// 3x3 K matrix; throws std::invalid_argument when delta <= 0.
Mat3 intrinsics_matrix(const Intrinsics& intr);

struct RelativePose {
  Vec3 r = Vec3::Zero();  // Euler angles, radians
  Vec3 t = Vec3::Zero();  // scene units
};

// Rotation order is intrinsic X-Y-Z: R = Rx(r0) * Ry(r1) * Rz(r2).
Mat3 euler_to_rotation(const Vec3& r);
// Inverse of euler_to_rotation; picks rz = 0 at the |sin(ry)| = 1 singularity.
Vec3 euler_from_rotation(const Mat3& R);

PoseMatrix make_relative_pose(const RelativePose& rp);

// output[0] = I, output[i] = output[i-1] * relatives[i-1].
// relatives may be empty (single-frame chain).
std::vector<PoseMatrix> chain_poses(std::span<const PoseMatrix> relatives);

// ---- bilinear sampling ------------------------------------------------------

// Support pixels and weights for sampling at continuous (u, v). in_rect is
// true iff (u, v) lies in the closed rectangle [0, W-1] x [0, H-1]; on the far
// edges the second support index collapses onto the first (its weight is 0).
struct BilinearSupport {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double fu = 0.0, fv = 0.0;
  bool in_rect = false;
};

inline BilinearSupport bilinear_support(double u, double v, int width, int height) {
  BilinearSupport s;
  s.in_rect = u >= 0.0 && u <= width - 1 && v >= 0.0 && v <= height - 1;
  if (!s.in_rect) return s;
  s.x0 = static_cast<int>(std::floor(u));
  s.y0 = static_cast<int>(std::floor(v));
  s.fu = u - s.x0;
  s.fv = v - s.y0;
  s.x1 = s.x0 + 1 < width ? s.x0 + 1 : s.x0;
  s.y1 = s.y0 + 1 < height ? s.y0 + 1 : s.y0;
  return s;
}

struct DepthSample {
  double value = 0.0;
  bool valid = false;
};

// Invalid when out of the closed rectangle or when any support pixel with
// nonzero weight is masked invalid (conservative, no renormalization).
DepthSample sample_bilinear(const DepthMap& map, PixelCoord p);

struct ColorSample {
  std::array<double, 3> value{0.0, 0.0, 0.0};
  bool valid = false;
};

ColorSample sample_bilinear(const ImageBuffer& img, PixelCoord p);

// ---- warping ----------------------------------------------------------------

struct WarpResult {
  PixelCoord coord;
  double depth = 0.0;
  bool valid = false;
};

// Forward-warps the point at source pixel p with source depth d from the
// camera at pose_i into the camera at pose_j:
//   d' * p' = K * R_j^T * (R_i * K^{-1} * d * p + t_i - t_j)
// d' is the third homogeneous component before dehomogenization. valid
// requires d' > kDepthEpsilon and p' inside [0,W-1]x[0,H-1]. Bitwise-equal
// poses short-circuit to the exact identity map (the relative transform of
// identical poses is the identity, which floating-point composition would
// only approximate).
WarpResult warp_point(PixelCoord p, double d, const Intrinsics& K,
                      const PoseMatrix& pose_i, const PoseMatrix& pose_j);

// ---- scalar-generic cores (shared by the plain path and the tape path) ------

template <class S>
struct Rot3T {
  // row-major entries
  std::array<S, 9> m;
};

template <class S>
struct Vec3T {
  S x, y, z;
};

template <class S>
Rot3T<S> euler_to_rotation_t(const S& rx, const S& ry, const S& rz) {
  using std::sin;
  using std::cos;
  using ad::sin;
  using ad::cos;
  const S sa = sin(rx), ca = cos(rx);
  const S sb = sin(ry), cb = cos(ry);
  const S sc = sin(rz), cc = cos(rz);
  Rot3T<S> R;
  R.m[0] = cb * cc;
  R.m[1] = -(cb * sc);
  R.m[2] = sb;
  R.m[3] = ca * sc + sa * sb * cc;
  R.m[4] = ca * cc - sa * sb * sc;
  R.m[5] = -(sa * cb);
  R.m[6] = sa * sc - ca * sb * cc;
  R.m[7] = sa * cc + ca * sb * sc;
  R.m[8] = ca * cb;
  return R;
}

// Source-camera to target-camera transform: R = Rj^T * Ri, t = Rj^T * (ti - tj).
template <class S>
struct RigidT {
  Rot3T<S> R;
  Vec3T<S> t;
};

template <class S>
RigidT<S> relative_rigid(const Rot3T<S>& Ri, const Vec3T<S>& ti, const Rot3T<S>& Rj,
                         const Vec3T<S>& tj) {
  RigidT<S> rel;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      // (Rj^T Ri)[r][c] = sum_k Rj[k][r] * Ri[k][c]
      rel.R.m[3 * r + c] = Rj.m[r] * Ri.m[c] + Rj.m[3 + r] * Ri.m[3 + c] + Rj.m[6 + r] * Ri.m[6 + c];
    }
  }
  const S dx = ti.x - tj.x, dy = ti.y - tj.y, dz = ti.z - tj.z;
  rel.t.x = Rj.m[0] * dx + Rj.m[3] * dy + Rj.m[6] * dz;
  rel.t.y = Rj.m[1] * dx + Rj.m[4] * dy + Rj.m[7] * dz;
  rel.t.z = Rj.m[2] * dx + Rj.m[5] * dy + Rj.m[8] * dz;
  return rel;
}

// Focal as a scalar (differentiable through delta on the tape path); the
// principal point is fixed.
template <class S>
struct CameraT {
  S f;
  S inv_f;
  double cx, cy;
};

template <class S>
struct WarpedPoint {
  S u, v, depth;
};

// Core of warp_point over plain doubles. (u, v) is the source pixel, d its
// depth. No validity decisions here; callers inspect depth/coords.
// snap_identity: the caller has verified that rel is the exact identity
// transform, so the mathematically exact result (u, v, d) is returned
// instead of the rounded composition. Keeps a self-pair's residuals at
// exactly zero without altering derivative structure on the tape path.
inline WarpedPoint<double> warp_pixel(const RigidT<double>& rel, const CameraT<double>& cam,
                                      double u, double v, double d,
                                      bool snap_identity = false) {
  if (snap_identity) return WarpedPoint<double>{u, v, d};
  const double rx = (u - cam.cx) * cam.inv_f;
  const double ry = (v - cam.cy) * cam.inv_f;
  // ray direction through the pixel; third component exactly 1, so the
  // z-depth of the source camera point is exactly d.
  const double wx = rel.R.m[0] * rx + rel.R.m[1] * ry + rel.R.m[2];
  const double wy = rel.R.m[3] * rx + rel.R.m[4] * ry + rel.R.m[5];
  const double wz = rel.R.m[6] * rx + rel.R.m[7] * ry + rel.R.m[8];
  const double Xx = d * wx + rel.t.x;
  const double Xy = d * wy + rel.t.y;
  const double Xz = d * wz + rel.t.z;
  WarpedPoint<double> out;
  out.depth = Xz;
  const double inv_z = 1.0 / Xz;
  out.u = cam.f * Xx * inv_z + cam.cx;
  out.v = cam.f * Xy * inv_z + cam.cy;
  return out;
}

// Tape variant with the same arithmetic, recorded as a handful of fused nodes
// (dot products and products with precomputed partials). Kept numerically in
// step with the plain version; the finite-difference suite cross-checks both.
WarpedPoint<ad::Var> warp_pixel(const RigidT<ad::Var>& rel, const CameraT<ad::Var>& cam,
                                double u, double v, ad::Var d, bool snap_identity = false);

// ---- fused tape sampling -----------------------------------------------------

// Bilinear sample of a constant grid at differentiable coordinates. The
// caller must have verified support validity on the value side.
ad::Var sample_const_grid(const double* grid, int width, int height, int channels, int channel,
                          ad::Var u, ad::Var v);

// Bilinear sample of a grid of tape variables at differentiable coordinates.
ad::Var sample_var_grid(std::span<const ad::Var> grid, int width, int height, ad::Var u,
                        ad::Var v);

}  // namespace screcon
