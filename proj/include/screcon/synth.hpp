#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "screcon/geometry.hpp"
#include "screcon/image.hpp"

namespace screcon {

// Axis-aligned analytic primitives; depths come from closed-form ray
// intersections, so rendered ground truth is oracle-grade.
struct PlanePrim {
  int axis = 2;        // 0 = x, 1 = y, 2 = z
  double value = 0.0;  // plane coordinate along that axis
};

struct BoxPrim {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
};

struct SpherePrim {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

struct SyntheticScene {
  int width = 64;
  int height = 48;
  double gt_focal = 0.0;  // pixels; fx = fy, principal point at the center
  std::vector<PlanePrim> planes;
  std::vector<BoxPrim> boxes;
  std::vector<SpherePrim> spheres;
  std::vector<PoseMatrix> trajectory;  // camera-to-world
  std::uint64_t texture_seed = 7;

  int frames() const { return static_cast<int>(trajectory.size()); }
  Intrinsics intrinsics() const;  // f0 = init_focal(w, h), delta = gt_focal / f0
};

// Ground plane + back wall + two boxes + two spheres, world-anchored
// checker/noise textures, and a smooth sideways arc (camera x right,
// y down, looks along +z). Inter-frame rotation stays under 5 degrees.
// The true focal sits near 0.85 of the uncalibrated initialization, so a
// run that never moves delta keeps a field-of-view error above 10%.
// rotation_frames appends a pure-rotation segment (yaw only, translation
// held at the arc's end) for parallax-free stress tests.
SyntheticScene make_default_scene(int frame_count = 20, int width = 64, int height = 48,
                                  std::uint64_t seed = 7, int rotation_frames = 0);

// Analytic ray cast of one frame: nearest positive-depth primitive hit per
// pixel. Depth is camera z-depth (ScaleConsistent); pixels that hit nothing
// are invalid. Throws when the camera center sits inside a box or sphere.
std::pair<ImageBuffer, DepthMap> render_scene(const SyntheticScene& scene, int frame);

// Per-frame affine corruption of ground-truth depth, the synthetic stand-in
// for an affine-invariant depth predictor: d -> alpha*[i] * d + beta*[i],
// optionally modulated by a smooth multiplicative field.
struct CorruptionSpec {
  std::vector<double> alpha_star;  // one per frame, > 0
  std::vector<double> beta_star;   // one per frame
  double field_amplitude = 0.0;    // 0 disables the low-frequency field
  std::uint64_t seed = 0;          // phases of the field
};

// alpha* uniform in [0.5, 2], beta* uniform in [-0.2, 0.2] * median_depth.
CorruptionSpec random_corruption(int frame_count, double median_depth, std::uint64_t seed);

DepthMap corrupt_depth(const DepthMap& gt, const CorruptionSpec& spec, int frame);

}  // namespace screcon
