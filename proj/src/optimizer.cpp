#include "screcon/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace screcon {

PackedParams unpack_params(const ParamLayout& layout, std::span<const double> params) {
  if (static_cast<int>(params.size()) != layout.size())
    throw std::invalid_argument("unpack_params: size mismatch");
  PackedParams out;
  out.frames.resize(static_cast<std::size_t>(layout.frames));
  for (int f = 0; f < layout.frames; ++f) {
    FrameParams& fp = out.frames[static_cast<std::size_t>(f)];
    fp.alpha_raw = params[static_cast<std::size_t>(layout.alpha_raw(f))];
    fp.beta = params[static_cast<std::size_t>(layout.beta(f))];
    fp.omega.resize(static_cast<std::size_t>(layout.anchors));
    for (int t = 0; t < layout.anchors; ++t)
      fp.omega[static_cast<std::size_t>(t)] = params[static_cast<std::size_t>(layout.omega(f, t))];
  }
  out.relatives.resize(static_cast<std::size_t>(layout.frames - 1));
  for (int p = 0; p + 1 < layout.frames; ++p) {
    RelativePose& rp = out.relatives[static_cast<std::size_t>(p)];
    for (int c = 0; c < 3; ++c) {
      rp.r[c] = params[static_cast<std::size_t>(layout.pose(p, c))];
      rp.t[c] = params[static_cast<std::size_t>(layout.pose(p, c + 3))];
    }
  }
  out.delta = params[static_cast<std::size_t>(layout.delta())];
  return out;
}

std::vector<double> pack_params(const ParamLayout& layout, const PackedParams& packed) {
  if (static_cast<int>(packed.frames.size()) != layout.frames ||
      static_cast<int>(packed.relatives.size()) != layout.frames - 1)
    throw std::invalid_argument("pack_params: count mismatch");
  std::vector<double> params(static_cast<std::size_t>(layout.size()), 0.0);
  for (int f = 0; f < layout.frames; ++f) {
    const FrameParams& fp = packed.frames[static_cast<std::size_t>(f)];
    if (static_cast<int>(fp.omega.size()) != layout.anchors)
      throw std::invalid_argument("pack_params: omega count mismatch");
    params[static_cast<std::size_t>(layout.alpha_raw(f))] = fp.alpha_raw;
    params[static_cast<std::size_t>(layout.beta(f))] = fp.beta;
    for (int t = 0; t < layout.anchors; ++t)
      params[static_cast<std::size_t>(layout.omega(f, t))] = fp.omega[static_cast<std::size_t>(t)];
  }
  for (int p = 0; p + 1 < layout.frames; ++p) {
    const RelativePose& rp = packed.relatives[static_cast<std::size_t>(p)];
    for (int c = 0; c < 3; ++c) {
      params[static_cast<std::size_t>(layout.pose(p, c))] = rp.r[c];
      params[static_cast<std::size_t>(layout.pose(p, c + 3))] = rp.t[c];
    }
  }
  params[static_cast<std::size_t>(layout.delta())] = packed.delta;
  return params;
}

std::vector<PoseMatrix> poses_from_params(const ParamLayout& layout,
                                          std::span<const double> params) {
  std::vector<PoseMatrix> relatives;
  relatives.reserve(static_cast<std::size_t>(layout.frames - 1));
  for (int p = 0; p + 1 < layout.frames; ++p) {
    RelativePose rp;
    for (int c = 0; c < 3; ++c) {
      rp.r[c] = params[static_cast<std::size_t>(layout.pose(p, c))];
      rp.t[c] = params[static_cast<std::size_t>(layout.pose(p, c + 3))];
    }
    relatives.push_back(make_relative_pose(rp));
  }
  return chain_poses(relatives);
}

OptimState make_optim_state(const ParamLayout& layout, const AdamConfig& cfg, bool freeze_poses,
                            bool freeze_delta) {
  const std::size_t n = static_cast<std::size_t>(layout.size());
  OptimState st;
  st.m.assign(n, 0.0);
  st.v.assign(n, 0.0);
  st.lr.assign(n, 0.0);
  st.frozen.assign(n, 0);
  for (int i = 0; i < layout.size(); ++i) {
    switch (group_of(layout, i)) {
      case ParamGroup::AlphaRaw:
      case ParamGroup::Beta:
      case ParamGroup::Omega:
        st.lr[static_cast<std::size_t>(i)] = cfg.lr_depth;
        break;
      case ParamGroup::Rotation:
      case ParamGroup::Translation:
        st.lr[static_cast<std::size_t>(i)] = cfg.lr_pose;
        if (freeze_poses) st.frozen[static_cast<std::size_t>(i)] = 1;
        break;
      case ParamGroup::Delta:
        st.lr[static_cast<std::size_t>(i)] = cfg.lr_delta;
        if (freeze_delta) st.frozen[static_cast<std::size_t>(i)] = 1;
        break;
    }
  }
  return st;
}

void update_step(OptimState& state, std::span<double> params, std::span<const double> grad,
                 const AdamConfig& cfg) {
  const std::size_t n = params.size();
  if (grad.size() != n || state.m.size() != n || state.lr.size() != n)
    throw std::invalid_argument("update_step: size mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw std::invalid_argument("update_step: non-finite gradient");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    if (!state.frozen.empty() && state.frozen[i]) continue;
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    const double lr = state.lr[i] * state.lr_scale;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * params[i]);
  }
}

const char* to_string(StageKind k) { return k == StageKind::Local ? "local" : "global"; }

LossWeights weights_at(const StageConfig& stage, int iteration) {
  LossWeights w;
  for (const auto& [start, weights] : stage.weight_knots) {
    if (iteration >= start) w = weights;
  }
  return w;
}

std::vector<StageConfig> make_schedule(bool outdoor, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("make_schedule: scale must be positive");
  const auto scaled = [scale](int n) {
    return std::max(0, static_cast<int>(std::lround(n * scale)));
  };
  const double gc_local = outdoor ? 0.001 : 0.5;
  const double gc_early = outdoor ? 0.001 : 1.0;
  const double gc_late = outdoor ? 0.001 : 0.1;

  StageConfig local;
  local.kind = StageKind::Local;
  local.iterations = scaled(2000);
  local.weight_knots = {{0, LossWeights{2.0, gc_local, 0.01}}};

  StageConfig global;
  global.kind = StageKind::Global;
  global.iterations = scaled(4000);
  global.weight_knots = {{0, LossWeights{2.0, gc_early, 0.1}},
                         {scaled(2000), LossWeights{2.0, gc_late, 0.1}}};
  return {local, global};
}

std::string format_loss_trace(std::span<const LossTraceRow> rows) {
  std::string out = "iteration, stage, pc, gc, regu, total\n";
  char buf[256];
  for (const LossTraceRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d, %s, %.17g, %.17g, %.17g, %.17g\n", r.iteration,
                  to_string(r.stage), r.pc, r.gc, r.regu, r.total);
    out += buf;
  }
  return out;
}

void run_stage(const EngineProblem& prob, const StageConfig& stage, const SamplerConfig& sampler,
               std::vector<double>& params, OptimState& state, const AdamConfig& adam, Rng& rng,
               std::vector<LossTraceRow>& trace, int iteration_base) {
  if (stage.iterations < 0) throw std::invalid_argument("run_stage: negative iteration count");
  if (stage.kind == StageKind::Global && stage.refresh_every < 1)
    throw std::invalid_argument("run_stage: refresh period must be positive");
  const int P = prob.layout.frames;

  KeyframeSchedule schedule;
  if (stage.kind == StageKind::Local) schedule = local_probabilities(P, sampler.k);

  std::vector<double> grad;
  for (int it = 0; it < stage.iterations; ++it) {
    if (stage.kind == StageKind::Global && it % stage.refresh_every == 0) {
      const std::vector<PoseMatrix> poses =
          prob.freeze_poses ? prob.fixed_poses : poses_from_params(prob.layout, params);
      schedule = global_probabilities(poses, sampler);
    }
    const std::vector<std::pair<int, int>> pairs =
        sample_pairs(schedule, sampler.refs_per_step, rng);
    const LossWeights weights = weights_at(stage, it);

    LossBreakdown bd;
    bool rejected = false;
    try {
      compute_gradients(prob, params, pairs, weights, state.frozen, grad, &bd, nullptr);
    } catch (const NonFiniteLossError& e) {
      rejected = true;
      state.consecutive_failures += 1;
      state.lr_scale *= 0.5;
      if (state.consecutive_failures >= 3)
        throw std::runtime_error(std::string("optimization diverged at ") + to_string(stage.kind) +
                                 " iteration " + std::to_string(iteration_base + it) + ": " +
                                 e.what());
    }
    if (rejected) continue;
    state.consecutive_failures = 0;
    update_step(state, params, grad, adam);
    trace.push_back(LossTraceRow{iteration_base + it, stage.kind, bd.pc, bd.gc, bd.regu, bd.total});
  }
}

OptimizeResult optimize(std::span<const FrameInput> frames, const OptimizeOptions& opt) {
  if (frames.size() < 2) throw std::invalid_argument("optimize: need at least two frames");
  const int W = frames[0].image.width();
  const int H = frames[0].image.height();
  for (const FrameInput& f : frames) {
    if (f.image.width() != W || f.image.height() != H ||
        f.image.channels() != frames[0].image.channels())
      throw std::invalid_argument("optimize: frames must share one image geometry");
    if (f.affine_depth.width() != W || f.affine_depth.height() != H)
      throw std::invalid_argument("optimize: depth/image size mismatch");
    if (f.affine_depth.stage() != DepthStage::AffineInvariant)
      throw std::invalid_argument("optimize: input depth must be at the AffineInvariant stage");
  }
  if (opt.freeze_poses && opt.gt_poses.size() != frames.size())
    throw std::invalid_argument("optimize: freezing poses requires one pose per input frame");
  if (!(opt.delta_init > 0.0))
    throw std::invalid_argument("optimize: initial focal scale must be positive");

  // Temporal downsampling on appearance. Degenerate walks (everything looks
  // alike) would leave fewer than two frames; keep the full sequence then.
  std::vector<int> selected;
  if (opt.skip_downsample) {
    selected.resize(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) selected[i] = static_cast<int>(i);
  } else {
    std::vector<ImageBuffer> images;
    images.reserve(frames.size());
    for (const FrameInput& f : frames) images.push_back(f.image);
    selected = downsample_frames(images, opt.sampler);
    if (selected.size() < 2) {
      selected.resize(frames.size());
      for (std::size_t i = 0; i < frames.size(); ++i) selected[i] = static_cast<int>(i);
    }
  }
  const int P = static_cast<int>(selected.size());

  EngineProblem prob;
  prob.width = W;
  prob.height = H;
  prob.f0 = opt.f0 > 0.0 ? opt.f0 : init_focal(W, H);
  prob.layout = ParamLayout{P, opt.anchor_count};
  prob.freeze_poses = opt.freeze_poses;
  if (opt.freeze_poses) {
    prob.fixed_poses.reserve(static_cast<std::size_t>(P));
    for (int idx : selected) prob.fixed_poses.push_back(opt.gt_poses[static_cast<std::size_t>(idx)]);
  }
  prob.frames.reserve(static_cast<std::size_t>(P));
  for (int idx : selected) {
    const FrameInput& f = frames[static_cast<std::size_t>(idx)];
    prob.frames.push_back(make_engine_frame(&f.image, &f.affine_depth,
                                            f.mask.empty() ? nullptr : &f.mask, opt.anchor_count,
                                            opt.lwlr));
  }

  std::vector<double> params = init_params(prob.layout);
  params[static_cast<std::size_t>(prob.layout.delta())] = opt.delta_init;
  OptimState state = make_optim_state(prob.layout, opt.adam, opt.freeze_poses, opt.freeze_delta);
  Rng rng(opt.sampler.seed);

  OptimizeResult res;
  int base = 0;
  for (const StageConfig& stage : make_schedule(opt.outdoor, opt.schedule_scale)) {
    run_stage(prob, stage, opt.sampler, params, state, opt.adam, rng, res.trace, base);
    base += stage.iterations;
  }

  res.selected = selected;
  res.layout = prob.layout;
  res.intrinsics = Intrinsics{params[static_cast<std::size_t>(prob.layout.delta())], prob.f0, W, H};
  res.poses = opt.freeze_poses ? prob.fixed_poses : poses_from_params(prob.layout, params);

  // Final rectification with the optimized parameters, on the plain path.
  const PackedParams packed = unpack_params(prob.layout, params);
  res.depths.reserve(static_cast<std::size_t>(P));
  res.globals.reserve(static_cast<std::size_t>(P));
  for (int k = 0; k < P; ++k) {
    const FrameInput& f = frames[static_cast<std::size_t>(selected[static_cast<std::size_t>(k)])];
    const FrameParams& fp = packed.frames[static_cast<std::size_t>(k)];
    const GlobalAffine g{ad::softplus(fp.alpha_raw), fp.beta};
    AnchorSet anchors;
    anchor_grid(W, H, opt.anchor_count, anchors.u, anchors.v);
    anchors.grid_side = static_cast<int>(std::lround(std::sqrt(opt.anchor_count)));
    anchors.omega = fp.omega;
    res.depths.push_back(consistency_align(f.affine_depth, g, anchors, opt.lwlr));
    res.globals.push_back(g);
  }
  res.params = std::move(params);
  return res;
}

// ---- gradient verification ------------------------------------------------------

namespace {

// One randomized two-frame instance: smooth textured images, positive
// affine depths, parameters jittered around the identity initialization so
// warps land at generic sub-pixel positions away from interpolation kinks.
struct GradcheckInstance {
  std::vector<ImageBuffer> images;
  std::vector<DepthMap> depths;
  EngineProblem prob;
  std::vector<double> params;
  std::vector<std::pair<int, int>> pairs;
  LossWeights weights;
};

void build_instance(GradcheckInstance& inst, Rng& rng, double sabotage) {
  const int W = 8, H = 6, M = 4, P = 2;
  inst.images.clear();
  inst.depths.clear();
  for (int f = 0; f < P; ++f) {
    ImageBuffer img(W, H, 3);
    DepthMap dep(W, H, DepthStage::AffineInvariant);
    const double phase = rng.uniform(0.0, 6.28);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        for (int c = 0; c < 3; ++c) {
          const double v = 0.5 + 0.25 * std::sin(0.9 * x + 0.6 * y + phase + 1.7 * c) +
                           0.15 * std::cos(1.7 * x - 1.1 * y + 0.5 * c) +
                           0.1 * (rng.uniform() - 0.5);
          img.at(x, y, c) = std::clamp(v, 0.0, 1.0);
        }
        dep.at(x, y) = 2.0 + 0.5 * std::sin(0.8 * x - 0.5 * y + phase) + 0.3 * rng.uniform();
      }
    }
    inst.images.push_back(std::move(img));
    inst.depths.push_back(std::move(dep));
  }

  inst.prob = EngineProblem{};
  inst.prob.width = W;
  inst.prob.height = H;
  inst.prob.f0 = init_focal(W, H);
  inst.prob.layout = ParamLayout{P, M};
  inst.prob.debug_grad_skew = sabotage;
  for (int f = 0; f < P; ++f)
    inst.prob.frames.push_back(make_engine_frame(&inst.images[static_cast<std::size_t>(f)],
                                                 &inst.depths[static_cast<std::size_t>(f)], nullptr,
                                                 M, LwlrConfig{}));

  inst.params = init_params(inst.prob.layout);
  const ParamLayout& L = inst.prob.layout;
  for (int f = 0; f < P; ++f) {
    inst.params[static_cast<std::size_t>(L.alpha_raw(f))] =
        ad::softplus_inverse(rng.uniform(0.8, 1.3));
    inst.params[static_cast<std::size_t>(L.beta(f))] = rng.uniform(-0.1, 0.1);
    for (int t = 0; t < M; ++t)
      inst.params[static_cast<std::size_t>(L.omega(f, t))] = rng.uniform(0.85, 1.15);
  }
  for (int c = 0; c < 3; ++c) {
    inst.params[static_cast<std::size_t>(L.pose(0, c))] = rng.uniform(-0.05, 0.05);
    inst.params[static_cast<std::size_t>(L.pose(0, c + 3))] = rng.uniform(-0.08, 0.08);
  }
  inst.params[static_cast<std::size_t>(L.delta())] = rng.uniform(0.9, 1.1);

  inst.pairs = {{0, 1}, {1, 0}};
  inst.weights = LossWeights{2.0, 0.5, 0.01};
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  if (opt.instances < 1) throw std::invalid_argument("run_gradcheck: need at least one instance");
  if (!(opt.fd_step > 0.0)) throw std::invalid_argument("run_gradcheck: step must be positive");
  GradcheckReport rep;
  GradcheckInstance inst;
  std::vector<double> grad;
  std::vector<double> probe;
  for (int k = 0; k < opt.instances; ++k) {
    Rng rng(opt.seed + 977 * static_cast<std::uint64_t>(k));
    build_instance(inst, rng, opt.sabotage);
    compute_gradients(inst.prob, inst.params, inst.pairs, inst.weights, {}, grad);

    const int n = inst.prob.layout.size();
    probe = inst.params;
    for (int i = 0; i < n; ++i) {
      const double saved = probe[static_cast<std::size_t>(i)];
      probe[static_cast<std::size_t>(i)] = saved + opt.fd_step;
      const double lp = evaluate_loss(inst.prob, probe, inst.pairs, inst.weights);
      probe[static_cast<std::size_t>(i)] = saved - opt.fd_step;
      const double lm = evaluate_loss(inst.prob, probe, inst.pairs, inst.weights);
      probe[static_cast<std::size_t>(i)] = saved;
      const double fd = (lp - lm) / (2.0 * opt.fd_step);
      const double ad = grad[static_cast<std::size_t>(i)];
      // Mixed relative/absolute: gradients that matter here are O(1e-2..1),
      // so the 1e-4 floor only mutes finite-difference noise on entries
      // whose true derivative is essentially zero.
      const double rel =
          std::abs(ad - fd) / std::max(std::max(std::abs(ad), std::abs(fd)), 1e-4);
      auto& g = rep.groups[static_cast<std::size_t>(group_of(inst.prob.layout, i))];
      g.max_rel_err = std::max(g.max_rel_err, rel);
      g.checks += 1;
      rep.worst = std::max(rep.worst, rel);
    }
  }
  rep.pass = rep.worst < opt.tolerance;
  return rep;
}

}  // namespace screcon
