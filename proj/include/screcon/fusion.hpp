#pragma once

#include <array>
#include <string>
#include <vector>

#include "screcon/geometry.hpp"
#include "screcon/image.hpp"

namespace screcon {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::array<double, 3>> colors;  // empty, or one entry per point

  std::size_t size() const { return points.size(); }
  bool colored() const { return !colors.empty(); }
};

// One world point per valid pixel: P * (K^-1 * d * p). Colors sampled from
// the image when given. Requires a ScaleConsistent depth map.
PointCloud unproject_frame(const DepthMap& depth, const Intrinsics& K, const PoseMatrix& pose,
                           const ImageBuffer* image = nullptr);

struct TsdfConfig {
  double voxel_size = 0.0;
  double truncation = 0.0;  // >= voxel_size
  Vec3 origin = Vec3::Zero();  // min corner of the grid
  int nx = 0, ny = 0, nz = 0;
};

// Dense truncated signed-distance grid with per-voxel observation weights.
// Integration projects each voxel center into the frame, reads the nearest
// valid depth pixel, clamps depth-minus-voxel-depth to +/- truncation
// (skipping voxels deeper than -truncation behind the surface), and folds
// it into a running weight-1 average.
class TsdfVolume {
 public:
  explicit TsdfVolume(const TsdfConfig& cfg);

  const TsdfConfig& config() const { return cfg_; }
  std::size_t voxel_count() const { return sdf_.size(); }
  double sdf_at(int i, int j, int k) const { return sdf_[index(i, j, k)]; }
  double weight_at(int i, int j, int k) const { return weight_[index(i, j, k)]; }
  Vec3 voxel_center(int i, int j, int k) const;

  void integrate(const DepthMap& depth, const Intrinsics& K, const PoseMatrix& pose);

  const std::vector<double>& sdf() const { return sdf_; }
  const std::vector<double>& weights() const { return weight_; }

 private:
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * cfg_.ny + j) * cfg_.nx + i;
  }
  TsdfConfig cfg_;
  std::vector<double> sdf_;
  std::vector<double> weight_;
};

// Axis-aligned grid covering [lo, hi] padded by one truncation band.
TsdfConfig fit_tsdf_config(const Vec3& lo, const Vec3& hi, double voxel_size,
                           double truncation_voxels = 4.0);

// Linearly interpolated zero crossings between adjacently observed voxels
// of opposite sign, along all three axes. Empty when nothing was observed.
PointCloud extract_surface_cloud(const TsdfVolume& volume);

struct Trajectory {
  std::vector<int> indices;  // source frame numbers
  std::vector<PoseMatrix> poses;
};

// Binary little-endian PLY: float32 x,y,z (+ uchar red,green,blue when
// colored). The reader accepts exactly the subset the writer emits.
void export_ply(const PointCloud& cloud, const std::string& path);
PointCloud read_ply(const std::string& path);

// One line per pose: "index tx ty tz qx qy qz qw", 9 significant digits,
// unit quaternion. '#' lines are comments on read.
void export_trajectory(const Trajectory& traj, const std::string& path);
Trajectory read_trajectory(const std::string& path);

// Fills the gaps a frame-downsampled trajectory leaves: between consecutive
// optimized frames the relative motion is split linearly (Euler angles and
// translation of the relative transform); frames past the last optimized
// one repeat its pose. Requires indices sorted and starting at 0.
Trajectory densify_trajectory(const Trajectory& sparse, int total_frames);

}  // namespace screcon
