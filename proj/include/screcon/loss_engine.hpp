#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "screcon/alignment.hpp"
#include "screcon/geometry.hpp"
#include "screcon/image.hpp"
#include "screcon/losses.hpp"
#include "screcon/tape.hpp"

namespace screcon {

// Thrown when an evaluation produces a non-finite term or the focal scale
// collapses. The divergence guard in the optimization loop catches this,
// rejects the step and halves the learning rate. frame_i/frame_j identify
// the offending pair; (-1, -1) means the failure was not pair-specific.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(int i, int j, const std::string& msg)
      : std::runtime_error(msg), frame_i(i), frame_j(j) {}
  int frame_i;
  int frame_j;
};

// Flat parameter vector. Per frame: (alpha_raw, beta, omega[0..M)); then 6
// values per adjacent frame pair (3 Euler angles, then 3 translations, pair
// p maps frame p+1 into frame p's coordinates); the shared focal scale
// delta last. alpha_raw is the softplus preimage of the global scale, so
// alpha = softplus(alpha_raw) stays positive for any real raw value.
struct ParamLayout {
  int frames = 0;
  int anchors = 0;  // omega slots per frame

  int frame_stride() const { return 2 + anchors; }
  int alpha_raw(int f) const { return f * frame_stride(); }
  int beta(int f) const { return f * frame_stride() + 1; }
  int omega(int f, int t) const { return f * frame_stride() + 2 + t; }
  int pose_offset() const { return frames * frame_stride(); }
  int pose(int p, int c) const { return pose_offset() + 6 * p + c; }
  int delta() const { return pose_offset() + 6 * (frames - 1); }
  int size() const { return delta() + 1; }
};

enum class ParamGroup : int {
  AlphaRaw = 0,
  Beta,
  Omega,
  Rotation,
  Translation,
  Delta,
};
inline constexpr int kParamGroupCount = 6;

const char* to_string(ParamGroup g);
ParamGroup group_of(const ParamLayout& layout, int index);

// alpha = 1 (raw = softplus^-1(1)), beta = 0, omega = 1, zero relative
// poses, delta = 1.
std::vector<double> init_params(const ParamLayout& layout);

// Static per-frame data for loss evaluation. The anchor grid is compacted
// to the anchors landing on valid input pixels; anchor_slot maps each one
// back to its omega slot, so the parameter layout keeps the full grid and
// dropped anchors keep contributing to the regularizer.
struct EngineFrame {
  const ImageBuffer* image = nullptr;
  const DepthMap* affine = nullptr;  // AffineInvariant input depth
  const PixelMask* mask = nullptr;   // optional; null = all pixels eligible
  AlignGeometry geo;
  std::vector<int> anchor_u, anchor_v;
  std::vector<int> anchor_slot;
};

EngineFrame make_engine_frame(const ImageBuffer* image, const DepthMap* affine,
                              const PixelMask* mask, int anchor_count, const LwlrConfig& lwlr);

struct EngineProblem {
  std::vector<EngineFrame> frames;
  ParamLayout layout;
  double f0 = 0.0;
  int width = 0;
  int height = 0;
  bool freeze_poses = false;
  // Camera-to-world poses used verbatim (as constants) when freeze_poses;
  // the pose parameter entries then receive exactly zero gradient.
  std::vector<PoseMatrix> fixed_poses;
  // Gradient-check negative control: scales one analytic partial of the
  // photometric residual. 1.0 = exact derivatives.
  double debug_grad_skew = 1.0;
};

struct EvalStats {
  int pairs = 0;
  int empty_pairs = 0;        // sampled pairs with no overlapping valid pixels
  std::size_t residuals = 0;  // pixels contributing photometric/geometric terms
};

// Plain (derivative-free) evaluation; shares every branch decision with the
// tape path, so finite differences of this function check the tape
// gradients. Throws NonFiniteLossError when a pair's terms are non-finite
// or delta is not positive.
double evaluate_loss(const EngineProblem& prob, std::span<const double> params,
                     std::span<const std::pair<int, int>> pairs, const LossWeights& weights,
                     LossBreakdown* breakdown = nullptr, EvalStats* stats = nullptr);

// Records the loss on a tape and runs the reverse sweep. grad is resized to
// the layout and receives d(total)/d(param); entries marked in frozen
// (empty = nothing frozen) are exactly zero. Returns the loss value.
double compute_gradients(const EngineProblem& prob, std::span<const double> params,
                         std::span<const std::pair<int, int>> pairs, const LossWeights& weights,
                         std::span<const std::uint8_t> frozen, std::vector<double>& grad,
                         LossBreakdown* breakdown = nullptr, EvalStats* stats = nullptr);

}  // namespace screcon
