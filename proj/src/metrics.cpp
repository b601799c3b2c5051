#include "screcon/metrics.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace screcon {

namespace {

double median_of(std::vector<double> values) {
  // Upper median for even counts; callers only rely on it being a fixed,
  // order-independent representative.
  std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                   values.end());
  return values[mid];
}

double rotation_angle(const Mat3& R) {
  double c = 0.5 * (R.trace() - 1.0);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

DepthMetrics metric_depth(std::span<const DepthMap> pred, std::span<const DepthMap> gt,
                          bool align) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("metric_depth: sequence lengths differ");
  if (pred.empty()) throw std::invalid_argument("metric_depth: empty sequence");

  std::vector<double> pred_vals;
  std::vector<double> gt_vals;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const DepthMap& p = pred[f];
    const DepthMap& g = gt[f];
    if (p.width() != g.width() || p.height() != g.height())
      throw std::invalid_argument("metric_depth: frame dimensions differ");
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p.valid_at(i) && p.data()[i] > 0.0) pred_vals.push_back(p.data()[i]);
      if (g.valid_at(i) && g.data()[i] > 0.0) gt_vals.push_back(g.data()[i]);
    }
  }

  double scale = 1.0;
  if (align) {
    if (pred_vals.empty() || gt_vals.empty())
      throw std::invalid_argument("metric_depth: no valid depths to align");
    scale = median_of(std::move(gt_vals)) / median_of(std::move(pred_vals));
  }

  double abs_rel_sum = 0.0;
  std::size_t inlier = 0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const DepthMap& p = pred[f];
    const DepthMap& g = gt[f];
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!p.valid_at(i) || !g.valid_at(i)) continue;
      double pv = scale * p.data()[i];
      double gv = g.data()[i];
      if (!(pv > 0.0) || !(gv > 0.0)) continue;
      abs_rel_sum += std::abs(pv - gv) / gv;
      if (std::max(pv / gv, gv / pv) < 1.25) ++inlier;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("metric_depth: no jointly valid pixels");

  DepthMetrics m;
  m.abs_rel = abs_rel_sum / static_cast<double>(count);
  m.delta1 = static_cast<double>(inlier) / static_cast<double>(count);
  m.scale = scale;
  return m;
}

SimilarityTransform align_similarity(std::span<const Vec3> from, std::span<const Vec3> to) {
  if (from.size() != to.size())
    throw std::invalid_argument("align_similarity: point counts differ");
  if (from.size() < 2)
    throw std::invalid_argument("align_similarity: need at least two points");

  Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(from.size()));
  Eigen::Matrix3Xd dst(3, static_cast<Eigen::Index>(to.size()));
  for (std::size_t i = 0; i < from.size(); ++i) {
    src.col(static_cast<Eigen::Index>(i)) = from[i];
    dst.col(static_cast<Eigen::Index>(i)) = to[i];
  }

  Eigen::Matrix4d T = Eigen::umeyama(src, dst, true);
  if (!T.allFinite())
    throw std::runtime_error("align_similarity: degenerate point configuration");

  SimilarityTransform s;
  Mat3 sr = T.topLeftCorner<3, 3>();
  s.scale = std::cbrt(sr.determinant());
  if (!(s.scale > 0.0))
    throw std::runtime_error("align_similarity: degenerate point configuration");
  s.R = sr / s.scale;
  s.t = T.topRightCorner<3, 1>();
  return s;
}

SimilarityTransform align_similarity_poses(std::span<const PoseMatrix> from,
                                           std::span<const PoseMatrix> to) {
  if (from.size() != to.size())
    throw std::invalid_argument("align_similarity_poses: pose counts differ");
  if (from.size() < 2)
    throw std::invalid_argument("align_similarity_poses: need at least two poses");

  const double n = static_cast<double>(from.size());
  Mat3 M = Mat3::Zero();
  Vec3 cf = Vec3::Zero(), ct = Vec3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    M += to[i].block<3, 3>(0, 0) * from[i].block<3, 3>(0, 0).transpose();
    cf += from[i].block<3, 1>(0, 3);
    ct += to[i].block<3, 1>(0, 3);
  }
  cf /= n;
  ct /= n;

  // Chordal rotation average: the nearest rotation to M under Frobenius norm.
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0.0)
    R = svd.matrixU() * Vec3(1.0, 1.0, -1.0).asDiagonal() * svd.matrixV().transpose();
  if (!R.allFinite())
    throw std::runtime_error("align_similarity_poses: degenerate rotation set");

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const Vec3 f = from[i].block<3, 1>(0, 3) - cf;
    const Vec3 t = to[i].block<3, 1>(0, 3) - ct;
    num += t.dot(R * f);
    den += f.squaredNorm();
  }
  SimilarityTransform s;
  if (!(den > 0.0) || !(num > 0.0))
    throw std::runtime_error("align_similarity_poses: degenerate camera centers");
  s.scale = num / den;
  s.R = R;
  s.t = ct - s.scale * (R * cf);
  return s;
}

PointCloud apply_similarity(const SimilarityTransform& s, const PointCloud& cloud) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const Vec3& p : cloud.points) out.points.push_back(s.apply(p));
  out.colors = cloud.colors;
  return out;
}

TrajectoryMetrics metric_trajectory(std::span<const PoseMatrix> pred,
                                    std::span<const PoseMatrix> gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("metric_trajectory: trajectory lengths differ");
  if (pred.size() < 2)
    throw std::invalid_argument("metric_trajectory: need at least two poses");

  std::size_t n = pred.size();
  std::vector<Vec3> pred_pos(n);
  std::vector<Vec3> gt_pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    pred_pos[i] = pred[i].block<3, 1>(0, 3);
    gt_pos[i] = gt[i].block<3, 1>(0, 3);
  }

  TrajectoryMetrics m;
  m.alignment = align_similarity(pred_pos, gt_pos);

  std::vector<Mat3> ar(n);   // aligned predicted rotations
  std::vector<Vec3> at(n);   // aligned predicted positions
  double ate_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ar[i] = m.alignment.R * pred[i].block<3, 3>(0, 0);
    at[i] = m.alignment.apply(pred_pos[i]);
    ate_sq += (at[i] - gt_pos[i]).squaredNorm();
  }
  m.ate = std::sqrt(ate_sq / static_cast<double>(n));

  double t_sq = 0.0;
  double r_sq = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    Vec3 rel_p = ar[i].transpose() * (at[i + 1] - at[i]);
    Vec3 rel_g = gt[i].block<3, 3>(0, 0).transpose() * (gt_pos[i + 1] - gt_pos[i]);
    Mat3 rot_p = ar[i].transpose() * ar[i + 1];
    Mat3 rot_g = gt[i].block<3, 3>(0, 0).transpose() * gt[i + 1].block<3, 3>(0, 0);
    t_sq += (rel_p - rel_g).squaredNorm();
    r_sq += std::pow(rotation_angle(rot_g.transpose() * rot_p), 2);
  }
  double pairs = static_cast<double>(n - 1);
  m.rpe_t = std::sqrt(t_sq / pairs);
  m.rpe_r_deg = std::sqrt(r_sq / pairs) * 180.0 / std::numbers::pi;
  return m;
}

double metric_fov(double delta, double f0, int width, double gt_focal) {
  if (width <= 0) throw std::invalid_argument("metric_fov: width must be positive");
  if (!(delta > 0.0) || !(f0 > 0.0) || !(gt_focal > 0.0))
    throw std::invalid_argument("metric_fov: focals must be positive");
  double fov_pred = 2.0 * std::atan(width / (2.0 * delta * f0));
  double fov_gt = 2.0 * std::atan(width / (2.0 * gt_focal));
  return std::abs(fov_pred - fov_gt) / fov_gt;
}

namespace {

// Uniform-grid index over a fixed point set; queries return the exact
// nearest neighbor by expanding Chebyshev rings of cells until no closer
// point can remain outside the examined shell.
class GridIndex {
 public:
  explicit GridIndex(std::span<const Vec3> points) : points_(points) {
    Vec3 lo = points[0];
    Vec3 hi = points[0];
    for (const Vec3& p : points_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    lo_ = lo;
    Vec3 ext = hi - lo;
    double diag = ext.norm();
    double target = std::cbrt(static_cast<double>(points_.size()));
    h_ = diag > 0.0 ? std::max(diag / std::max(target, 1.0), 1e-12) : 1.0;
    for (int a = 0; a < 3; ++a)
      dims_[a] = static_cast<int>(std::floor(ext[a] / h_)) + 1;

    std::size_t cells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    starts_.assign(cells + 1, 0);
    std::vector<std::size_t> cell_of(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      cell_of[i] = cell_index(coord_of(points_[i]));
      ++starts_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) starts_[c + 1] += starts_[c];
    order_.resize(points_.size());
    std::vector<std::size_t> cursor(starts_.begin(), starts_.end() - 1);
    for (std::size_t i = 0; i < points_.size(); ++i) order_[cursor[cell_of[i]]++] = i;
  }

  double nearest_distance(const Vec3& q) const {
    std::array<int, 3> c;
    for (int a = 0; a < 3; ++a)
      c[a] = static_cast<int>(std::floor((q[a] - lo_[a]) / h_));
    int kmax = 0;
    for (int a = 0; a < 3; ++a)
      kmax = std::max(kmax, std::max(std::abs(c[a]), std::abs(dims_[a] - 1 - c[a])));

    double best_sq = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= kmax; ++k) {
      for (int dz = -k; dz <= k; ++dz) {
        int z = c[2] + dz;
        if (z < 0 || z >= dims_[2]) continue;
        for (int dy = -k; dy <= k; ++dy) {
          int y = c[1] + dy;
          if (y < 0 || y >= dims_[1]) continue;
          bool face = std::abs(dz) == k || std::abs(dy) == k;
          int step = face ? 1 : 2 * k;
          for (int dx = -k; dx <= k; dx += std::max(step, 1)) {
            int x = c[0] + dx;
            if (x < 0 || x >= dims_[0]) continue;
            std::size_t cell =
                (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
            for (std::size_t s = starts_[cell]; s < starts_[cell + 1]; ++s)
              best_sq = std::min(best_sq, (points_[order_[s]] - q).squaredNorm());
          }
        }
      }
      // Every point outside rings 0..k sits at distance >= k * h from q.
      if (best_sq <= (k * h_) * (k * h_)) break;
    }
    return std::sqrt(best_sq);
  }

 private:
  std::array<int, 3> coord_of(const Vec3& p) const {
    std::array<int, 3> c;
    for (int a = 0; a < 3; ++a)
      c[a] = std::clamp(static_cast<int>(std::floor((p[a] - lo_[a]) / h_)), 0,
                        dims_[a] - 1);
    return c;
  }

  std::size_t cell_index(const std::array<int, 3>& c) const {
    return (static_cast<std::size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
  }

  std::span<const Vec3> points_;
  Vec3 lo_ = Vec3::Zero();
  double h_ = 1.0;
  std::array<int, 3> dims_ = {1, 1, 1};
  std::vector<std::size_t> starts_;
  std::vector<std::size_t> order_;
};

}  // namespace

std::vector<double> nearest_distances(std::span<const Vec3> from, std::span<const Vec3> to) {
  if (to.empty()) throw std::invalid_argument("nearest_distances: empty target set");
  GridIndex index(to);
  std::vector<double> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) out[i] = index.nearest_distance(from[i]);
  return out;
}

CloudMetrics metric_cloud(const PointCloud& pred, const PointCloud& gt, double tau) {
  if (pred.size() == 0 || gt.size() == 0)
    throw std::invalid_argument("metric_cloud: empty point cloud");
  if (!(tau > 0.0)) throw std::invalid_argument("metric_cloud: tau must be positive");

  std::vector<double> d_pred = nearest_distances(pred.points, gt.points);
  std::vector<double> d_gt = nearest_distances(gt.points, pred.points);

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto frac_below = [tau](const std::vector<double>& v) {
    std::size_t n = 0;
    for (double x : v)
      if (x < tau) ++n;
    return static_cast<double>(n) / static_cast<double>(v.size());
  };

  CloudMetrics m;
  m.chamfer_l1 = 0.5 * (mean_of(d_pred) + mean_of(d_gt));
  m.precision = frac_below(d_pred);
  m.recall = frac_below(d_gt);
  m.f_score = (m.precision + m.recall) > 0.0
                  ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                  : 0.0;
  return m;
}

}  // namespace screcon
