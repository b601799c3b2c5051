#include "screcon/fusion.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace screcon {

PointCloud unproject_frame(const DepthMap& depth, const Intrinsics& K, const PoseMatrix& pose,
                           const ImageBuffer* image) {
  if (depth.stage() != DepthStage::ScaleConsistent)
    throw std::invalid_argument("unproject_frame: depth must be scale-consistent");
  if (image && (image->width() != depth.width() || image->height() != depth.height()))
    throw std::invalid_argument("unproject_frame: image/depth size mismatch");
  const double f = K.focal();
  if (!(f > 0.0)) throw std::invalid_argument("unproject_frame: focal must be positive");
  const double inv_f = 1.0 / f;
  const Mat3 R = pose.block<3, 3>(0, 0);
  const Vec3 t = pose.block<3, 1>(0, 3);

  PointCloud cloud;
  cloud.points.reserve(depth.valid_count());
  if (image) cloud.colors.reserve(depth.valid_count());
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.valid(x, y)) continue;
      const double d = depth.at(x, y);
      const Vec3 cam((x - K.cx()) * inv_f * d, (y - K.cy()) * inv_f * d, d);
      cloud.points.push_back(R * cam + t);
      if (image) {
        std::array<double, 3> c{};
        for (int ch = 0; ch < 3; ++ch)
          c[static_cast<std::size_t>(ch)] =
              image->at(x, y, image->channels() == 1 ? 0 : ch);
        cloud.colors.push_back(c);
      }
    }
  }
  return cloud;
}

TsdfVolume::TsdfVolume(const TsdfConfig& cfg) : cfg_(cfg) {
  if (!(cfg.voxel_size > 0.0)) throw std::invalid_argument("TsdfVolume: voxel size must be > 0");
  if (cfg.truncation < cfg.voxel_size)
    throw std::invalid_argument("TsdfVolume: truncation must be >= voxel size");
  if (cfg.nx < 1 || cfg.ny < 1 || cfg.nz < 1)
    throw std::invalid_argument("TsdfVolume: empty grid");
  const std::size_t n =
      static_cast<std::size_t>(cfg.nx) * static_cast<std::size_t>(cfg.ny) * cfg.nz;
  sdf_.assign(n, 0.0);
  weight_.assign(n, 0.0);
}

Vec3 TsdfVolume::voxel_center(int i, int j, int k) const {
  return cfg_.origin + cfg_.voxel_size * Vec3(i + 0.5, j + 0.5, k + 0.5);
}

void TsdfVolume::integrate(const DepthMap& depth, const Intrinsics& K, const PoseMatrix& pose) {
  if (depth.stage() != DepthStage::ScaleConsistent)
    throw std::invalid_argument("TsdfVolume::integrate: depth must be scale-consistent");
  const double f = K.focal();
  if (!(f > 0.0)) throw std::invalid_argument("TsdfVolume::integrate: focal must be positive");
  const Mat3 Rt = pose.block<3, 3>(0, 0).transpose();
  const Vec3 t = pose.block<3, 1>(0, 3);

  for (int k = 0; k < cfg_.nz; ++k) {
    for (int j = 0; j < cfg_.ny; ++j) {
      for (int i = 0; i < cfg_.nx; ++i) {
        const Vec3 cam = Rt * (voxel_center(i, j, k) - t);
        if (cam.z() <= kDepthEpsilon) continue;
        const int px = static_cast<int>(std::lround(f * cam.x() / cam.z() + K.cx()));
        const int py = static_cast<int>(std::lround(f * cam.y() / cam.z() + K.cy()));
        if (px < 0 || px >= depth.width() || py < 0 || py >= depth.height()) continue;
        if (!depth.valid(px, py)) continue;
        const double sdf = depth.at(px, py) - cam.z();
        if (sdf < -cfg_.truncation) continue;  // occluded beyond the band
        const double clamped = sdf > cfg_.truncation ? cfg_.truncation : sdf;
        const std::size_t idx = index(i, j, k);
        const double w = weight_[idx];
        sdf_[idx] = (sdf_[idx] * w + clamped) / (w + 1.0);
        weight_[idx] = w + 1.0;
      }
    }
  }
}

TsdfConfig fit_tsdf_config(const Vec3& lo, const Vec3& hi, double voxel_size,
                           double truncation_voxels) {
  if (!(voxel_size > 0.0)) throw std::invalid_argument("fit_tsdf_config: voxel size must be > 0");
  if (truncation_voxels < 1.0)
    throw std::invalid_argument("fit_tsdf_config: truncation must be at least one voxel");
  TsdfConfig cfg;
  cfg.voxel_size = voxel_size;
  cfg.truncation = truncation_voxels * voxel_size;
  const Vec3 pad = Vec3::Constant(cfg.truncation);
  cfg.origin = lo - pad;
  const Vec3 extent = (hi + pad) - cfg.origin;
  cfg.nx = std::max(1, static_cast<int>(std::ceil(extent.x() / voxel_size)));
  cfg.ny = std::max(1, static_cast<int>(std::ceil(extent.y() / voxel_size)));
  cfg.nz = std::max(1, static_cast<int>(std::ceil(extent.z() / voxel_size)));
  return cfg;
}

PointCloud extract_surface_cloud(const TsdfVolume& volume) {
  const TsdfConfig& cfg = volume.config();
  PointCloud cloud;
  const auto emit = [&](int i0, int j0, int k0, int i1, int j1, int k1) {
    if (volume.weight_at(i0, j0, k0) <= 0.0 || volume.weight_at(i1, j1, k1) <= 0.0) return;
    const double s0 = volume.sdf_at(i0, j0, k0);
    const double s1 = volume.sdf_at(i1, j1, k1);
    if ((s0 < 0.0) == (s1 < 0.0)) return;
    const double t = s0 / (s0 - s1);
    const Vec3 c0 = volume.voxel_center(i0, j0, k0);
    const Vec3 c1 = volume.voxel_center(i1, j1, k1);
    cloud.points.push_back(c0 + t * (c1 - c0));
  };
  for (int k = 0; k < cfg.nz; ++k)
    for (int j = 0; j < cfg.ny; ++j)
      for (int i = 0; i < cfg.nx; ++i) {
        if (i + 1 < cfg.nx) emit(i, j, k, i + 1, j, k);
        if (j + 1 < cfg.ny) emit(i, j, k, i, j + 1, k);
        if (k + 1 < cfg.nz) emit(i, j, k, i, j, k + 1);
      }
  return cloud;
}

void export_ply(const PointCloud& cloud, const std::string& path) {
  if (cloud.colored() && cloud.colors.size() != cloud.points.size())
    throw std::invalid_argument("export_ply: color/point count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write PLY: " + path);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.points.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.colored())
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const float xyz[3] = {static_cast<float>(cloud.points[i].x()),
                          static_cast<float>(cloud.points[i].y()),
                          static_cast<float>(cloud.points[i].z())};
    out.write(reinterpret_cast<const char*>(xyz), sizeof xyz);
    if (cloud.colored()) {
      std::uint8_t rgb[3];
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(cloud.colors[i][static_cast<std::size_t>(c)], 0.0, 1.0);
        rgb[c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
      out.write(reinterpret_cast<const char*>(rgb), sizeof rgb);
    }
  }
  if (!out) throw std::runtime_error("short PLY write: " + path);
}

PointCloud read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open PLY: " + path);
  std::string line;
  std::size_t count = 0;
  bool colored = false;
  bool header_done = false;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    if (line == "end_header") {
      header_done = true;
      break;
    }
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "element") {
      std::string what;
      ls >> what >> count;
      if (what != "vertex") throw std::runtime_error("unsupported PLY element: " + what);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
      if (name == "red") colored = true;
    } else if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian")
        throw std::runtime_error("unsupported PLY format: " + fmt);
    }
  }
  if (!header_done) throw std::runtime_error("truncated PLY header: " + path);

  PointCloud cloud;
  cloud.points.resize(count);
  if (colored) cloud.colors.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    float xyz[3];
    in.read(reinterpret_cast<char*>(xyz), sizeof xyz);
    cloud.points[i] = Vec3(xyz[0], xyz[1], xyz[2]);
    if (colored) {
      std::uint8_t rgb[3];
      in.read(reinterpret_cast<char*>(rgb), sizeof rgb);
      for (int c = 0; c < 3; ++c) cloud.colors[i][static_cast<std::size_t>(c)] = rgb[c] / 255.0;
    }
  }
  if (!in) throw std::runtime_error("truncated PLY data: " + path);
  return cloud;
}

void export_trajectory(const Trajectory& traj, const std::string& path) {
  if (traj.indices.size() != traj.poses.size())
    throw std::invalid_argument("export_trajectory: index/pose count mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory: " + path);
  char buf[256];
  for (std::size_t i = 0; i < traj.poses.size(); ++i) {
    const PoseMatrix& P = traj.poses[i];
    Eigen::Quaterniond q(Mat3(P.block<3, 3>(0, 0)));
    q.normalize();
    std::snprintf(buf, sizeof buf, "%d %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", traj.indices[i],
                  P(0, 3), P(1, 3), P(2, 3), q.x(), q.y(), q.z(), q.w());
    out << buf;
  }
  if (!out) throw std::runtime_error("short trajectory write: " + path);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory: " + path);
  Trajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double idx, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> idx >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw std::runtime_error("malformed trajectory line: " + line);
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (std::abs(q.norm() - 1.0) > 1e-6) q.normalize();
    PoseMatrix P = PoseMatrix::Identity();
    P.block<3, 3>(0, 0) = q.toRotationMatrix();
    P.block<3, 1>(0, 3) = Vec3(tx, ty, tz);
    traj.indices.push_back(static_cast<int>(idx));
    traj.poses.push_back(P);
  }
  return traj;
}

Trajectory densify_trajectory(const Trajectory& sparse, int total_frames) {
  if (sparse.indices.empty() || sparse.indices.front() != 0)
    throw std::invalid_argument("densify_trajectory: need a pose for frame 0");
  if (sparse.indices.size() != sparse.poses.size())
    throw std::invalid_argument("densify_trajectory: index/pose count mismatch");
  for (std::size_t i = 1; i < sparse.indices.size(); ++i)
    if (sparse.indices[i] <= sparse.indices[i - 1])
      throw std::invalid_argument("densify_trajectory: indices must be strictly increasing");
  if (total_frames <= sparse.indices.back())
    throw std::invalid_argument("densify_trajectory: total frame count too small");

  Trajectory dense;
  dense.indices.reserve(static_cast<std::size_t>(total_frames));
  dense.poses.reserve(static_cast<std::size_t>(total_frames));
  std::size_t seg = 0;
  for (int frame = 0; frame < total_frames; ++frame) {
    while (seg + 1 < sparse.indices.size() && sparse.indices[seg + 1] <= frame) ++seg;
    dense.indices.push_back(frame);
    if (sparse.indices[seg] == frame || seg + 1 >= sparse.indices.size()) {
      dense.poses.push_back(sparse.poses[seg]);  // exact frame or tail hold
      continue;
    }
    const PoseMatrix& A = sparse.poses[seg];
    const PoseMatrix& B = sparse.poses[seg + 1];
    const double s = static_cast<double>(frame - sparse.indices[seg]) /
                     (sparse.indices[seg + 1] - sparse.indices[seg]);
    const Mat3 Ra = A.block<3, 3>(0, 0);
    const Mat3 rel_R = Ra.transpose() * B.block<3, 3>(0, 0);
    const Vec3 rel_e = euler_from_rotation(rel_R);
    const Vec3 rel_t =
        Ra.transpose() * (B.block<3, 1>(0, 3) - A.block<3, 1>(0, 3));
    PoseMatrix step = PoseMatrix::Identity();
    step.block<3, 3>(0, 0) = euler_to_rotation(s * rel_e);
    step.block<3, 1>(0, 3) = s * rel_t;
    dense.poses.push_back(A * step);
  }
  return dense;
}

}  // namespace screcon
