#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "screcon/loss_engine.hpp"
#include "screcon/sampler.hpp"

namespace screcon {

// Structured view of the flat parameter vector; pack/unpack round-trip.
struct FrameParams {
  double alpha_raw = 0.0;  // softplus preimage of the global scale
  double beta = 0.0;
  std::vector<double> omega;
};

struct PackedParams {
  std::vector<FrameParams> frames;
  std::vector<RelativePose> relatives;  // frame p+1 relative to frame p
  double delta = 1.0;
};

PackedParams unpack_params(const ParamLayout& layout, std::span<const double> params);
std::vector<double> pack_params(const ParamLayout& layout, const PackedParams& packed);

// World (camera-to-world) poses chained from the relative-pose parameters.
std::vector<PoseMatrix> poses_from_params(const ParamLayout& layout,
                                          std::span<const double> params);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
  double lr_depth = 1e-2;     // alpha_raw, beta, omega
  double lr_pose = 1e-3;      // Euler angles and translations
  double lr_delta = 1e-3;     // focal scale
};

struct OptimState {
  std::vector<double> m;  // first moments
  std::vector<double> v;  // second moments
  std::vector<double> lr;
  std::vector<std::uint8_t> frozen;
  double lr_scale = 1.0;  // halved by the divergence guard, applies to every group
  long step = 0;
  int consecutive_failures = 0;
};

OptimState make_optim_state(const ParamLayout& layout, const AdamConfig& cfg, bool freeze_poses,
                            bool freeze_delta);

// Bias-corrected adaptive-moment update with decoupled weight decay. Frozen
// entries never change (values or moments). Throws on non-finite gradients.
void update_step(OptimState& state, std::span<double> params, std::span<const double> grad,
                 const AdamConfig& cfg);

enum class StageKind { Local, Global };
const char* to_string(StageKind k);

struct StageConfig {
  StageKind kind = StageKind::Local;
  int iterations = 0;
  // (start iteration, weights); the last knot at or before the current
  // iteration applies.
  std::vector<std::pair<int, LossWeights>> weight_knots;
  int refresh_every = 100;  // keyframe schedule refresh period (Global stage)
};

LossWeights weights_at(const StageConfig& stage, int iteration);

// The two-stage default: Local 2000 iterations with weights (2, 0.5, 0.01),
// then Global 4000 with (2, 1, 0.1) switching to (2, 0.1, 0.1) halfway.
// Outdoor scenes pin the geometric weight to 0.001 in every phase. All
// counts scale by the given factor.
std::vector<StageConfig> make_schedule(bool outdoor, double scale);

struct LossTraceRow {
  int iteration = 0;  // global index across stages
  StageKind stage = StageKind::Local;
  double pc = 0.0, gc = 0.0, regu = 0.0, total = 0.0;
};

// CSV with header "iteration, stage, pc, gc, regu, total"; full-precision
// numbers so identical runs produce identical bytes.
std::string format_loss_trace(std::span<const LossTraceRow> rows);

// One optimization stage: per iteration builds/refreshes the keyframe
// schedule (temporal neighborhoods for Local, pose-aware weights for
// Global), samples pairs, evaluates gradients, steps. Non-finite
// evaluations reject the step and halve the learning rate; three
// consecutive rejections abort.
void run_stage(const EngineProblem& prob, const StageConfig& stage, const SamplerConfig& sampler,
               std::vector<double>& params, OptimState& state, const AdamConfig& adam, Rng& rng,
               std::vector<LossTraceRow>& trace, int iteration_base);

struct FrameInput {
  ImageBuffer image;
  DepthMap affine_depth;
  PixelMask mask;  // empty = every pixel eligible
};

struct OptimizeOptions {
  SamplerConfig sampler;
  LwlrConfig lwlr;
  AdamConfig adam;
  int anchor_count = 25;
  bool outdoor = false;
  double schedule_scale = 1.0;
  bool freeze_poses = false;
  bool freeze_delta = false;
  bool skip_downsample = false;
  double f0 = 0.0;          // <= 0 selects init_focal(width, height)
  double delta_init = 1.0;  // e.g. gt_fx / f0 when freezing intrinsics
  std::vector<PoseMatrix> gt_poses;  // input order; required when freeze_poses
};

struct OptimizeResult {
  std::vector<int> selected;      // indices into the input sequence
  std::vector<DepthMap> depths;   // ScaleConsistent, selected order
  std::vector<PoseMatrix> poses;  // camera-to-world, selected order
  Intrinsics intrinsics;
  std::vector<LossTraceRow> trace;
  std::vector<double> params;
  ParamLayout layout;
  std::vector<GlobalAffine> globals;  // final per-frame global affine
};

// Full pipeline on an in-memory sequence: temporal downsampling, parameter
// initialization (identity poses, alpha=1, beta=0, omega=1, delta=1), the
// two-stage schedule, then a final plain rectification pass and pose chain.
// With freeze_poses the returned poses are the given ground-truth matrices
// verbatim.
OptimizeResult optimize(std::span<const FrameInput> frames, const OptimizeOptions& opt);

// ---- derivative verification --------------------------------------------------

struct GradcheckOptions {
  int instances = 10;
  std::uint64_t seed = 1;
  double fd_step = 1e-5;
  double tolerance = 1e-4;
  // Multiplies one analytic partial of the photometric residual; a value
  // != 1 is the negative control and must make the check fail.
  double sabotage = 1.0;
};

struct GradcheckReport {
  struct Group {
    double max_rel_err = 0.0;
    int checks = 0;
  };
  std::array<Group, kParamGroupCount> groups{};
  double worst = 0.0;
  bool pass = false;
};

// Seeded randomized two-frame instances; compares every tape gradient entry
// against central finite differences of the plain evaluation path and
// aggregates the worst relative error per parameter group.
GradcheckReport run_gradcheck(const GradcheckOptions& opt);

}  // namespace screcon
