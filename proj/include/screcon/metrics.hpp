#pragma once

#include <span>
#include <vector>

#include "screcon/fusion.hpp"
#include "screcon/geometry.hpp"
#include "screcon/image.hpp"

namespace screcon {

struct DepthMetrics {
  double abs_rel = 0.0;
  double delta1 = 0.0;  // fraction with max(pred/gt, gt/pred) < 1.25, strict
  double scale = 1.0;   // the applied median-ratio alignment factor
};

// Sequence-level depth accuracy. With align, one global factor
// median(all valid GT) / median(all valid predictions) rescales the
// predictions first; errors are then averaged over pixels valid in both.
DepthMetrics metric_depth(std::span<const DepthMap> pred, std::span<const DepthMap> gt,
                          bool align = true);

// Least-squares similarity (scale, rotation, translation) mapping one point
// set onto another; minimizes sum |scale*R*from + t - to|^2.
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (R * p) + t; }
};

SimilarityTransform align_similarity(std::span<const Vec3> from, std::span<const Vec3> to);

// Similarity from full camera frames: rotation by averaging the per-pose
// relative rotations, scale and translation by least squares on positions.
// Unlike the position-only fit, this stays well conditioned when the camera
// centers are nearly collinear, which matters when the transform is applied
// to points far from the trajectory.
SimilarityTransform align_similarity_poses(std::span<const PoseMatrix> from,
                                           std::span<const PoseMatrix> to);

PointCloud apply_similarity(const SimilarityTransform& s, const PointCloud& cloud);

struct TrajectoryMetrics {
  double ate = 0.0;        // RMSE of similarity-aligned positions
  double rpe_t = 0.0;      // consecutive-pair relative translation RMSE
  double rpe_r_deg = 0.0;  // consecutive-pair relative rotation-angle RMSE
  SimilarityTransform alignment;
};

TrajectoryMetrics metric_trajectory(std::span<const PoseMatrix> pred,
                                    std::span<const PoseMatrix> gt);

// Field-of-view error: FOV(f) = 2*atan(width / (2 f)), predicted focal is
// delta*f0; returns |FOV_pred - FOV_gt| / FOV_gt.
double metric_fov(double delta, double f0, int width, double gt_focal);

struct CloudMetrics {
  double chamfer_l1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
};

// Chamfer-l1 = half the sum of the two directed mean nearest-neighbor
// distances; precision/recall count strict < tau matches. Exact nearest
// neighbors via a uniform-grid index.
CloudMetrics metric_cloud(const PointCloud& pred, const PointCloud& gt, double tau);

// Per-point nearest-neighbor distances (exact); exposed for oracle tests.
std::vector<double> nearest_distances(std::span<const Vec3> from, std::span<const Vec3> to);

struct MetricsReport {
  double abs_rel = 0.0;
  double delta1 = 0.0;
  double ate = 0.0;
  double rpe_t = 0.0;
  double rpe_r_deg = 0.0;
  double fov_abs_rel = 0.0;
  double chamfer_l1 = 0.0;
  double f_score = 0.0;
};

}  // namespace screcon
