#include "screcon/synth.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "screcon/rng.hpp"

namespace screcon {

namespace {

// SplitMix64-style integer hash onto [0, 1).
double lattice_noise(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = seed;
  h ^= static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h ^= static_cast<std::uint64_t>(y) * 0x94d049bb133111ebULL;
  h = (h ^ (h >> 27)) * 0x2545f4914f6cdd1dULL;
  h ^= static_cast<std::uint64_t>(z) * 0xd6e8feb86659fd93ULL;
  h ^= h >> 31;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Quintic fade: C2-smooth interpolation weights for the value noise.
double fade(double t) { return t * t * t * (t * (6.0 * t - 15.0) + 10.0); }

// Smoothed value noise over a unit lattice.
double value_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const std::int64_t ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
                     iz = static_cast<std::int64_t>(fz);
  const double tx = fade(p.x() - fx), ty = fade(p.y() - fy), tz = fade(p.z() - fz);
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
        acc += w * lattice_noise(ix + dx, iy + dy, iz + dz, seed);
      }
  return acc;
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int material = -1;  // index into the per-primitive palette
};

void hit_plane(const PlanePrim& pl, const Vec3& o, const Vec3& d, int material, Hit& best) {
  const double denom = d(pl.axis);
  if (denom == 0.0) return;
  const double t = (pl.value - o(pl.axis)) / denom;
  if (t > kDepthEpsilon && t < best.t) best = Hit{t, material};
}

void hit_box(const BoxPrim& b, const Vec3& o, const Vec3& d, int material, Hit& best) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d(a) == 0.0) {
      if (o(a) < b.lo(a) || o(a) > b.hi(a)) return;
      continue;
    }
    double near = (b.lo(a) - o(a)) / d(a);
    double far = (b.hi(a) - o(a)) / d(a);
    if (near > far) std::swap(near, far);
    if (near > t0) t0 = near;
    if (far < t1) t1 = far;
    if (t0 > t1) return;
  }
  const double t = t0 > kDepthEpsilon ? t0 : t1;
  if (t > kDepthEpsilon && t < best.t) best = Hit{t, material};
}

void hit_sphere(const SpherePrim& s, const Vec3& o, const Vec3& d, int material, Hit& best) {
  const Vec3 oc = o - s.center;
  const double a = d.dot(d);
  const double half_b = oc.dot(d);
  const double c = oc.dot(oc) - s.radius * s.radius;
  const double disc = half_b * half_b - a * c;
  if (disc < 0.0) return;
  const double root = std::sqrt(disc);
  double t = (-half_b - root) / a;
  if (t <= kDepthEpsilon) t = (-half_b + root) / a;
  if (t > kDepthEpsilon && t < best.t) best = Hit{t, material};
}

// World-anchored procedural texture: a sinusoidal checker blended with smooth
// value noise, tinted by a per-primitive base color. View independence keeps
// the photometric loss consistent across frames. Every component is band
// limited: the benchmark renders at 64x48 and resamples warped frames
// bilinearly, so hard-edged patterns would leave a photometric residue at the
// true alignment that swamps the pose signal. The checker axes are diagonal so
// no axis-aligned surface loses both factors, and the slower factor runs along
// z because the ground plane compresses z heavily near the horizon.
void shade(const Vec3& p, int material, std::uint64_t seed, double* rgb) {
  constexpr double kTau = 6.283185307179586;
  const double phase_u = kTau * lattice_noise(material, 11, 3, seed);
  const double phase_v = kTau * lattice_noise(material, 12, 3, seed);
  const double checker = std::sin(kTau * (p.x() + p.y()) / 2.0 + phase_u) *
                         std::sin(kTau * (p.z() - p.x()) / 3.2 + phase_v);
  const double noise = value_noise(0.5 * p, seed + 0x51ed270bULL) - 0.5;
  const double base[3] = {lattice_noise(material, 1, 7, seed),
                          lattice_noise(material, 2, 7, seed),
                          lattice_noise(material, 3, 7, seed)};
  const double tone = 0.62 + 0.24 * checker + 0.32 * noise;
  for (int c = 0; c < 3; ++c) {
    const double v = tone * (0.80 + 0.40 * base[c]);
    rgb[c] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  }
}

}  // namespace

Intrinsics SyntheticScene::intrinsics() const {
  Intrinsics K;
  K.f0 = init_focal(width, height);
  K.delta = gt_focal / K.f0;
  K.width = width;
  K.height = height;
  return K;
}

SyntheticScene make_default_scene(int frame_count, int width, int height, std::uint64_t seed,
                                  int rotation_frames) {
  if (frame_count < 1) throw std::invalid_argument("make_default_scene: need at least one frame");
  if (rotation_frames < 0)
    throw std::invalid_argument("make_default_scene: rotation frame count must be >= 0");
  SyntheticScene scene;
  scene.width = width;
  scene.height = height;
  scene.gt_focal = 0.85 * init_focal(width, height);
  scene.texture_seed = seed;

  scene.planes.push_back(PlanePrim{1, 1.0});   // ground (y points down)
  scene.planes.push_back(PlanePrim{2, 7.5});   // back wall
  // Foreground sits at 3.6-5.6 against the 7.5 wall: enough parallax to pin
  // the poses, the focal scalar, and the translation-vs-depth scale gauge,
  // but shallow enough that inter-frame disocclusion bands stay narrow and
  // silhouette depth jumps stay moderate.
  scene.boxes.push_back(BoxPrim{Vec3(-1.7, -0.1, 3.6), Vec3(-0.7, 1.0, 4.6)});
  scene.boxes.push_back(BoxPrim{Vec3(0.9, 0.25, 4.6), Vec3(1.9, 1.0, 5.6)});
  scene.spheres.push_back(SpherePrim{Vec3(0.1, 0.4, 3.9), 0.6});
  scene.spheres.push_back(SpherePrim{Vec3(-0.5, 0.6, 5.5), 0.45});

  // Sideways arc with compensating yaw and a pitch ripple. The ripple is not
  // decoration: the focal scalar is identified through the quadratic field
  // structure of rotational flow, so the trajectory must exercise rotation
  // about both image axes or delta stays poorly observable.
  const double arc = 0.4;  // radians swept to each side
  const double radius = 2.0;
  for (int i = 0; i < frame_count; ++i) {
    const double s = frame_count == 1 ? 0.0 : i / (frame_count - 1.0);
    const double a = arc * (2.0 * s - 1.0);
    const Vec3 euler(0.05 * std::sin(12.5663706143591730 * s), -1.5 * a, 0.0);
    const Vec3 t(radius * std::sin(a), 0.05 * std::sin(3.0 * a),
                 radius * (1.0 - std::cos(a)));
    PoseMatrix P = PoseMatrix::Identity();
    P.block<3, 3>(0, 0) = euler_to_rotation(euler);
    P.block<3, 1>(0, 3) = t;
    scene.trajectory.push_back(P);
  }

  // Pure-rotation stress segment: the camera keeps yawing in place, which
  // removes parallax entirely for these pairs.
  const Vec3 end_t = scene.trajectory.back().block<3, 1>(0, 3);
  const double end_yaw = -1.5 * (frame_count == 1 ? -arc : arc);
  for (int i = 1; i <= rotation_frames; ++i) {
    PoseMatrix P = PoseMatrix::Identity();
    P.block<3, 3>(0, 0) = euler_to_rotation(Vec3(0.0, end_yaw + 0.04 * i, 0.0));
    P.block<3, 1>(0, 3) = end_t;
    scene.trajectory.push_back(P);
  }
  return scene;
}

std::pair<ImageBuffer, DepthMap> render_scene(const SyntheticScene& scene, int frame) {
  if (frame < 0 || frame >= scene.frames())
    throw std::invalid_argument("render_scene: frame index out of range");
  if (!(scene.gt_focal > 0.0))
    throw std::invalid_argument("render_scene: focal must be positive");
  const PoseMatrix& P = scene.trajectory[static_cast<std::size_t>(frame)];
  const Mat3 R = P.block<3, 3>(0, 0);
  const Vec3 o = P.block<3, 1>(0, 3);

  for (const BoxPrim& b : scene.boxes)
    if ((o.array() >= b.lo.array()).all() && (o.array() <= b.hi.array()).all())
      throw std::invalid_argument("render_scene: camera inside a box");
  for (const SpherePrim& s : scene.spheres)
    if ((o - s.center).norm() < s.radius)
      throw std::invalid_argument("render_scene: camera inside a sphere");

  const Intrinsics K = scene.intrinsics();
  const double inv_f = 1.0 / K.focal();
  ImageBuffer image(scene.width, scene.height, 3);
  DepthMap depth(scene.width, scene.height, DepthStage::ScaleConsistent);

  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      // Camera-space direction with unit z, so the ray parameter is z-depth.
      const Vec3 dir = R * Vec3((x - K.cx()) * inv_f, (y - K.cy()) * inv_f, 1.0);
      Hit best;
      int material = 0;
      for (const PlanePrim& pl : scene.planes) hit_plane(pl, o, dir, material++, best);
      for (const BoxPrim& b : scene.boxes) hit_box(b, o, dir, material++, best);
      for (const SpherePrim& s : scene.spheres) hit_sphere(s, o, dir, material++, best);

      if (best.material < 0) {
        depth.at(x, y) = 0.0;
        depth.set_valid(x, y, false);
        for (int c = 0; c < 3; ++c) image.at(x, y, c) = 0.0;
        continue;
      }
      depth.at(x, y) = best.t;
      double rgb[3];
      shade(o + best.t * dir, best.material, scene.texture_seed, rgb);
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = rgb[c];
    }
  }
  depth.refresh_validity(kDepthEpsilon);
  return {std::move(image), std::move(depth)};
}

CorruptionSpec random_corruption(int frame_count, double median_depth, std::uint64_t seed) {
  if (frame_count < 1) throw std::invalid_argument("random_corruption: need at least one frame");
  if (!(median_depth > 0.0))
    throw std::invalid_argument("random_corruption: median depth must be positive");
  CorruptionSpec spec;
  spec.seed = seed;
  Rng rng(seed);
  for (int i = 0; i < frame_count; ++i) {
    spec.alpha_star.push_back(rng.uniform(0.5, 2.0));
    spec.beta_star.push_back(rng.uniform(-0.2, 0.2) * median_depth);
  }
  return spec;
}

DepthMap corrupt_depth(const DepthMap& gt, const CorruptionSpec& spec, int frame) {
  if (frame < 0 || frame >= static_cast<int>(spec.alpha_star.size()) ||
      spec.alpha_star.size() != spec.beta_star.size())
    throw std::invalid_argument("corrupt_depth: frame index outside the spec");
  const double a = spec.alpha_star[static_cast<std::size_t>(frame)];
  const double b = spec.beta_star[static_cast<std::size_t>(frame)];
  if (!(a > 0.0)) throw std::invalid_argument("corrupt_depth: scale must be positive");

  DepthMap out(gt.width(), gt.height(), DepthStage::AffineInvariant);
  out.validity() = gt.validity();
  Rng phase_rng(spec.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(frame + 1));
  const double px = phase_rng.uniform(0.0, 6.283185307179586);
  const double py = phase_rng.uniform(0.0, 6.283185307179586);
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (!gt.valid(x, y)) {
        out.at(x, y) = 0.0;
        continue;
      }
      double d = a * gt.at(x, y) + b;
      if (spec.field_amplitude != 0.0) {
        const double field =
            1.0 + spec.field_amplitude *
                      std::sin(6.283185307179586 * x / gt.width() + px) *
                      std::sin(6.283185307179586 * y / gt.height() + py);
        d *= field;
      }
      if (!(d > 0.0))
        throw std::invalid_argument(
            "corrupt_depth: spec drives a visible depth non-positive");
      out.at(x, y) = d;
    }
  return out;
}

}  // namespace screcon
