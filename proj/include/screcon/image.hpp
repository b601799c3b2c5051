#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace screcon {

// Depth values at or below this threshold are treated as invalid everywhere
// (warping, alignment, fusion).
inline constexpr double kDepthEpsilon = 1e-6;

// Continuous pixel coordinate. Homogeneous scale is fixed at 1, so (u, v)
// stands for the column vector (u, v, 1).
struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

// Progress of a depth map through the rectification pipeline. Operations
// consuming a map check the tag and reject out-of-order inputs.
enum class DepthStage : std::uint8_t {
  AffineInvariant,   // raw single-image prediction, unknown scale and shift
  GloballyAligned,   // after the per-frame global scale/shift
  ScaleConsistent,   // after the locally weighted refinement
};

inline const char* to_string(DepthStage s) {
  switch (s) {
    case DepthStage::AffineInvariant: return "affine_invariant";
    case DepthStage::GloballyAligned: return "globally_aligned";
    case DepthStage::ScaleConsistent: return "scale_consistent";
  }
  return "unknown";
}

// Row-major interleaved image, 1 or 3 channels, values in [0, 1].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0)
      throw std::invalid_argument("ImageBuffer: dimensions must be positive");
    if (channels != 1 && channels != 3)
      throw std::invalid_argument("ImageBuffer: channels must be 1 or 3");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  double& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Single-channel depth grid with a per-pixel validity mask and a stage tag.
// File I/O uses float32; in memory we keep doubles so that algebraic
// round-trips (e.g. applying an affine map and its exact inverse) hold to
// double precision.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, DepthStage stage, double fill = 0.0)
      : width_(width), height_(height), stage_(stage) {
    if (width <= 0 || height <= 0)
      throw std::invalid_argument("DepthMap: dimensions must be positive");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
    valid_.assign(data_.size(), 1);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  DepthStage stage() const { return stage_; }
  void set_stage(DepthStage s) { stage_ = s; }

  double& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  bool valid(int x, int y) const { return valid_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  bool valid_at(std::size_t i) const { return valid_[i] != 0; }
  void set_valid(int x, int y, bool v) {
    valid_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }

  // Marks entries invalid when non-finite or <= min_value. Existing
  // invalidations are kept.
  void refresh_validity(double min_value) {
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (!std::isfinite(data_[i]) || data_[i] <= min_value) valid_[i] = 0;
  }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid_) n += v;
    return n;
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<std::uint8_t>& validity() { return valid_; }
  const std::vector<std::uint8_t>& validity() const { return valid_; }

 private:
  int width_ = 0;
  int height_ = 0;
  DepthStage stage_ = DepthStage::AffineInvariant;
  std::vector<double> data_;
  std::vector<std::uint8_t> valid_;
};

// Binary eligibility mask (e.g. sky exclusion): 0 = excluded, nonzero = eligible.
class PixelMask {
 public:
  PixelMask() = default;
  PixelMask(int width, int height, bool eligible = true)
      : width_(width), height_(height) {
    if (width <= 0 || height <= 0)
      throw std::invalid_argument("PixelMask: dimensions must be positive");
    data_.assign(static_cast<std::size_t>(width) * height, eligible ? 1 : 0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  bool eligible(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool v) {
    data_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }

  std::vector<std::uint8_t>& data() { return data_; }
  const std::vector<std::uint8_t>& data() const { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

}  // namespace screcon
