#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "screcon/optimizer.hpp"
#include "screcon/rng.hpp"

using namespace screcon;

namespace {

ImageBuffer textured_image(int w, int h, double phase) {
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = 0.5 + 0.3 * std::sin(0.7 * x + 0.4 * y + phase + c) +
                          0.2 * std::cos(1.3 * x - 0.8 * y);
  return img;
}

DepthMap smooth_depth(int w, int h, double base) {
  DepthMap d(w, h, DepthStage::AffineInvariant);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      d.at(x, y) = base + 0.4 * std::sin(0.5 * x + 0.3 * y) + 0.02 * x;
  return d;
}

}  // namespace

TEST_CASE("parameter layout offsets") {
  ParamLayout L{3, 4};
  CHECK(L.frame_stride() == 6);
  CHECK(L.size() == 31);
  CHECK(L.alpha_raw(0) == 0);
  CHECK(L.beta(0) == 1);
  CHECK(L.omega(0, 0) == 2);
  CHECK(L.alpha_raw(1) == 6);
  CHECK(L.omega(2, 3) == 17);
  CHECK(L.pose_offset() == 18);
  CHECK(L.pose(0, 0) == 18);
  CHECK(L.pose(1, 4) == 28);
  CHECK(L.delta() == 30);

  ParamLayout full{5, 25};
  CHECK(full.frame_stride() == 27);
  CHECK(full.size() == 5 * 27 + 6 * 4 + 1);
}

TEST_CASE("group classification covers every index") {
  ParamLayout L{3, 4};
  int counts[kParamGroupCount] = {};
  for (int i = 0; i < L.size(); ++i) counts[static_cast<int>(group_of(L, i))]++;
  CHECK(counts[static_cast<int>(ParamGroup::AlphaRaw)] == 3);
  CHECK(counts[static_cast<int>(ParamGroup::Beta)] == 3);
  CHECK(counts[static_cast<int>(ParamGroup::Omega)] == 12);
  CHECK(counts[static_cast<int>(ParamGroup::Rotation)] == 6);
  CHECK(counts[static_cast<int>(ParamGroup::Translation)] == 6);
  CHECK(counts[static_cast<int>(ParamGroup::Delta)] == 1);
  CHECK(group_of(L, L.pose(1, 2)) == ParamGroup::Rotation);
  CHECK(group_of(L, L.pose(1, 3)) == ParamGroup::Translation);
}

TEST_CASE("initial parameters decode to the identity model") {
  ParamLayout L{2, 4};
  std::vector<double> p = init_params(L);
  CHECK(p.size() == static_cast<std::size_t>(L.size()));
  CHECK(ad::softplus(p[L.alpha_raw(0)]) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(p[L.beta(1)] == 0.0);
  CHECK(p[L.omega(1, 3)] == 1.0);
  for (int c = 0; c < 6; ++c) CHECK(p[L.pose(0, c)] == 0.0);
  CHECK(p[L.delta()] == 1.0);
}

TEST_CASE("pack and unpack round-trip bitwise") {
  ParamLayout L{4, 9};
  Rng rng(31);
  std::vector<double> p(static_cast<std::size_t>(L.size()));
  for (auto& v : p) v = rng.uniform(-3.0, 3.0);
  PackedParams packed = unpack_params(L, p);
  CHECK(packed.frames.size() == 4);
  CHECK(packed.relatives.size() == 3);
  CHECK(packed.frames[2].omega.size() == 9);
  CHECK(packed.frames[1].beta == p[L.beta(1)]);
  CHECK(packed.relatives[2].t.y() == p[L.pose(2, 4)]);
  CHECK(packed.delta == p[L.delta()]);
  std::vector<double> back = pack_params(L, packed);
  REQUIRE(back.size() == p.size());
  CHECK(std::memcmp(back.data(), p.data(), p.size() * sizeof(double)) == 0);
}

TEST_CASE("pose chaining from parameters") {
  ParamLayout L{3, 1};
  std::vector<double> p = init_params(L);
  SUBCASE("identity parameters give identity world poses") {
    auto poses = poses_from_params(L, p);
    REQUIRE(poses.size() == 3);
    for (const auto& M : poses)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(M(i, j) == (i == j ? 1.0 : 0.0));
  }
  SUBCASE("world pose is the running product of relatives") {
    p[L.pose(0, 1)] = 0.3;   // rotation about y between frames 0 and 1
    p[L.pose(0, 3)] = 0.5;   // translation x
    p[L.pose(1, 0)] = -0.2;  // rotation about x between frames 1 and 2
    p[L.pose(1, 5)] = 0.7;   // translation z
    auto poses = poses_from_params(L, p);
    PoseMatrix rel0 = make_relative_pose(RelativePose{{0.0, 0.3, 0.0}, {0.5, 0.0, 0.0}});
    PoseMatrix rel1 = make_relative_pose(RelativePose{{-0.2, 0.0, 0.0}, {0.0, 0.0, 0.7}});
    PoseMatrix want1 = rel0;
    PoseMatrix want2 = rel0 * rel1;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        CHECK(poses[1](i, j) == doctest::Approx(want1(i, j)).epsilon(1e-15));
        CHECK(poses[2](i, j) == doctest::Approx(want2(i, j)).epsilon(1e-15));
      }
  }
}

TEST_CASE("optimizer state learning rates and freeze flags") {
  ParamLayout L{2, 4};
  AdamConfig cfg;
  OptimState st = make_optim_state(L, cfg, true, true);
  CHECK(st.lr[L.alpha_raw(0)] == cfg.lr_depth);
  CHECK(st.lr[L.omega(1, 2)] == cfg.lr_depth);
  CHECK(st.lr[L.pose(0, 1)] == cfg.lr_pose);
  CHECK(st.lr[L.delta()] == cfg.lr_delta);
  for (int c = 0; c < 6; ++c) CHECK(st.frozen[L.pose(0, c)] == 1);
  CHECK(st.frozen[L.delta()] == 1);
  CHECK(st.frozen[L.beta(0)] == 0);

  OptimState free = make_optim_state(L, cfg, false, false);
  for (auto f : free.frozen) CHECK(f == 0);
}

TEST_CASE("first adaptive step moves by roughly one learning rate") {
  ParamLayout L{2, 1};
  AdamConfig cfg;
  OptimState st = make_optim_state(L, cfg, false, false);
  std::vector<double> p(static_cast<std::size_t>(L.size()), 1.0);
  std::vector<double> g(p.size(), 1.0);
  std::vector<double> before = p;
  update_step(st, p, g, cfg);
  // Bias correction makes the first update lr * g / (|g| + eps).
  CHECK(before[L.beta(0)] - p[L.beta(0)] == doctest::Approx(cfg.lr_depth).epsilon(1e-6));
  CHECK(before[L.pose(0, 2)] - p[L.pose(0, 2)] == doctest::Approx(cfg.lr_pose).epsilon(1e-6));
  CHECK(before[L.delta()] - p[L.delta()] == doctest::Approx(cfg.lr_delta).epsilon(1e-6));
  CHECK(st.step == 1);
}

TEST_CASE("adaptive update matches a hand-rolled reference trajectory") {
  ParamLayout L{2, 1};  // size 8, treat as generic vector
  AdamConfig cfg;
  cfg.weight_decay = 0.04;
  OptimState st = make_optim_state(L, cfg, false, false);
  const std::size_t n = st.m.size();
  std::vector<double> p(n), rp(n), rm(n, 0.0), rv(n, 0.0);
  Rng rng(7);
  for (auto& v : p) v = rng.uniform(-1.0, 1.0);
  rp = p;
  std::vector<double> g(n);
  for (int step = 1; step <= 3; ++step) {
    for (auto& v : g) v = rng.uniform(-2.0, 2.0);
    update_step(st, p, g, cfg);
    const double bc1 = 1.0 - std::pow(cfg.beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step);
    for (std::size_t i = 0; i < n; ++i) {
      rm[i] = cfg.beta1 * rm[i] + (1.0 - cfg.beta1) * g[i];
      rv[i] = cfg.beta2 * rv[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      rp[i] -= st.lr[i] * ((rm[i] / bc1) / (std::sqrt(rv[i] / bc2) + cfg.eps) +
                           cfg.weight_decay * rp[i]);
    }
    for (std::size_t i = 0; i < n; ++i) CHECK(p[i] == doctest::Approx(rp[i]).epsilon(1e-14));
  }
}

TEST_CASE("frozen entries never move and zero gradients leave values fixed") {
  ParamLayout L{2, 1};
  AdamConfig cfg;
  OptimState st = make_optim_state(L, cfg, true, true);
  std::vector<double> p = init_params(L);
  std::vector<double> before = p;
  std::vector<double> g(p.size(), 0.5);
  for (int k = 0; k < 5; ++k) update_step(st, p, g, cfg);
  for (int c = 0; c < 6; ++c) CHECK(p[L.pose(0, c)] == before[L.pose(0, c)]);
  CHECK(p[L.delta()] == before[L.delta()]);
  CHECK(p[L.beta(0)] != before[L.beta(0)]);
  CHECK(st.m[L.pose(0, 0)] == 0.0);
  CHECK(st.v[L.delta()] == 0.0);

  // Without decay, a zero gradient produces a bitwise no-op.
  OptimState fresh = make_optim_state(L, cfg, false, false);
  std::vector<double> q = before;
  std::vector<double> zero(q.size(), 0.0);
  update_step(fresh, q, zero, cfg);
  CHECK(std::memcmp(q.data(), before.data(), q.size() * sizeof(double)) == 0);
}

TEST_CASE("non-finite gradients are rejected by the update") {
  ParamLayout L{2, 1};
  AdamConfig cfg;
  OptimState st = make_optim_state(L, cfg, false, false);
  std::vector<double> p = init_params(L);
  std::vector<double> g(p.size(), 0.0);
  g[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(update_step(st, p, g, cfg), std::invalid_argument);
  g[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(update_step(st, p, g, cfg), std::invalid_argument);
}

TEST_CASE("stage weights switch at their knots") {
  StageConfig stage;
  stage.kind = StageKind::Global;
  stage.iterations = 40;
  stage.weight_knots = {{0, LossWeights{2.0, 1.0, 0.1}}, {20, LossWeights{2.0, 0.1, 0.1}}};
  CHECK(weights_at(stage, 0).lambda_gc == 1.0);
  CHECK(weights_at(stage, 19).lambda_gc == 1.0);
  CHECK(weights_at(stage, 20).lambda_gc == 0.1);
  CHECK(weights_at(stage, 39).lambda_gc == 0.1);
}

TEST_CASE("default schedule numbers") {
  SUBCASE("indoor") {
    auto stages = make_schedule(false, 1.0);
    REQUIRE(stages.size() == 2);
    CHECK(stages[0].kind == StageKind::Local);
    CHECK(stages[0].iterations == 2000);
    REQUIRE(stages[0].weight_knots.size() == 1);
    CHECK(stages[0].weight_knots[0].second.lambda_pc == 2.0);
    CHECK(stages[0].weight_knots[0].second.lambda_gc == 0.5);
    CHECK(stages[0].weight_knots[0].second.lambda_regu == 0.01);
    CHECK(stages[1].kind == StageKind::Global);
    CHECK(stages[1].iterations == 4000);
    REQUIRE(stages[1].weight_knots.size() == 2);
    CHECK(stages[1].weight_knots[0].second.lambda_gc == 1.0);
    CHECK(stages[1].weight_knots[0].second.lambda_regu == 0.1);
    CHECK(stages[1].weight_knots[1].first == 2000);
    CHECK(stages[1].weight_knots[1].second.lambda_gc == 0.1);
  }
  SUBCASE("outdoor pins the geometric weight low") {
    auto stages = make_schedule(true, 1.0);
    CHECK(stages[0].weight_knots[0].second.lambda_gc == 0.001);
    CHECK(stages[1].weight_knots[0].second.lambda_gc == 0.001);
    CHECK(stages[1].weight_knots[1].second.lambda_gc == 0.001);
  }
  SUBCASE("scaling shrinks counts and knots together") {
    auto stages = make_schedule(false, 0.01);
    CHECK(stages[0].iterations == 20);
    CHECK(stages[1].iterations == 40);
    CHECK(stages[1].weight_knots[1].first == 20);
  }
}

TEST_CASE("loss trace formatting round-trips full precision") {
  std::vector<LossTraceRow> rows = {
      {0, StageKind::Local, 0.1234567890123456789, 2.0 / 3.0, 1e-17, 0.7901234567890123},
      {2000, StageKind::Global, 0.0, 0.5, 0.01, 0.51}};
  std::string csv = format_loss_trace(rows);
  CHECK(csv.rfind("iteration, stage, pc, gc, regu, total\n", 0) == 0);
  CHECK(csv.find("0, local, ") != std::string::npos);
  CHECK(csv.find("2000, global, ") != std::string::npos);
  // Parse back the first data row and compare bitwise.
  std::size_t line_start = csv.find('\n') + 1;
  std::size_t line_end = csv.find('\n', line_start);
  std::string line = csv.substr(line_start, line_end - line_start);
  double vals[4];
  int it = 0;
  char stage[16];
  REQUIRE(std::sscanf(line.c_str(), "%d, %15[^,], %lf, %lf, %lf, %lf", &it, stage, &vals[0],
                      &vals[1], &vals[2], &vals[3]) == 6);
  CHECK(it == 0);
  CHECK(vals[0] == rows[0].pc);
  CHECK(vals[1] == rows[0].gc);
  CHECK(vals[2] == rows[0].regu);
  CHECK(vals[3] == rows[0].total);
}

namespace {

// Two-frame engine problem over identical inputs. With identity parameters
// the warp is the identity, so every residual vanishes identically.
struct TwinProblem {
  ImageBuffer image;
  DepthMap depth;
  EngineProblem prob;
  std::vector<double> params;
  std::vector<std::pair<int, int>> pairs = {{0, 1}, {1, 0}};

  TwinProblem(int w, int h, int anchors) : image(textured_image(w, h, 0.4)),
                                           depth(smooth_depth(w, h, 2.0)) {
    prob.width = w;
    prob.height = h;
    prob.f0 = init_focal(w, h);
    prob.layout = ParamLayout{2, anchors};
    prob.frames.push_back(make_engine_frame(&image, &depth, nullptr, anchors, LwlrConfig{}));
    prob.frames.push_back(make_engine_frame(&image, &depth, nullptr, anchors, LwlrConfig{}));
    params = init_params(prob.layout);
  }
};

}  // namespace

TEST_CASE("identical frames at the identity start are an exact zero of the loss") {
  TwinProblem tp(12, 9, 4);
  LossBreakdown bd;
  EvalStats stats;
  const double total =
      evaluate_loss(tp.prob, tp.params, tp.pairs, LossWeights{2.0, 0.5, 0.01}, &bd, &stats);
  CHECK(total == 0.0);
  CHECK(bd.pc == 0.0);
  CHECK(bd.gc == 0.0);
  CHECK(bd.regu == 0.0);
  CHECK(stats.pairs == 2);
  CHECK(stats.empty_pairs == 0);
  CHECK(stats.residuals == 2 * 12 * 9);

  std::vector<double> grad;
  compute_gradients(tp.prob, tp.params, tp.pairs, LossWeights{2.0, 0.5, 0.01}, {}, grad);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("gradients flow at the identity start when frames differ") {
  TwinProblem tp(12, 9, 4);
  DepthMap other = smooth_depth(12, 9, 2.6);
  ImageBuffer other_img = textured_image(12, 9, 2.1);
  tp.prob.frames[1] = make_engine_frame(&other_img, &other, nullptr, 4, LwlrConfig{});
  std::vector<double> grad;
  compute_gradients(tp.prob, tp.params, tp.pairs, LossWeights{2.0, 0.5, 0.01}, {}, grad);
  const ParamLayout& L = tp.prob.layout;
  double pose_mag = 0.0, depth_mag = 0.0;
  for (int c = 0; c < 6; ++c) pose_mag += std::abs(grad[L.pose(0, c)]);
  depth_mag += std::abs(grad[L.alpha_raw(0)]) + std::abs(grad[L.beta(0)]);
  CHECK(pose_mag > 0.0);
  CHECK(depth_mag > 0.0);
  CHECK(std::abs(grad[L.delta()]) > 0.0);
}

TEST_CASE("frozen mask zeroes exactly those gradients and leaves the rest bitwise intact") {
  TwinProblem tp(12, 9, 4);
  DepthMap other = smooth_depth(12, 9, 2.6);
  tp.prob.frames[1] = make_engine_frame(&tp.image, &other, nullptr, 4, LwlrConfig{});
  const ParamLayout& L = tp.prob.layout;
  // Nudge away from the identity so everything has signal.
  tp.params[L.pose(0, 0)] = 0.01;
  tp.params[L.pose(0, 4)] = 0.02;

  std::vector<double> free_grad, frozen_grad;
  compute_gradients(tp.prob, tp.params, tp.pairs, LossWeights{2.0, 0.5, 0.01}, {}, free_grad);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(L.size()), 0);
  for (int c = 0; c < 6; ++c) mask[L.pose(0, c)] = 1;
  mask[L.delta()] = 1;
  compute_gradients(tp.prob, tp.params, tp.pairs, LossWeights{2.0, 0.5, 0.01}, mask, frozen_grad);
  for (int i = 0; i < L.size(); ++i) {
    if (mask[i])
      CHECK(frozen_grad[i] == 0.0);
    else
      CHECK(frozen_grad[i] == free_grad[i]);
  }
}

TEST_CASE("gradient check passes and its negative control fails") {
  GradcheckOptions opt;
  GradcheckReport rep = run_gradcheck(opt);
  for (const auto& g : rep.groups) CHECK(g.checks > 0);
  CHECK(rep.worst < opt.tolerance);
  CHECK(rep.pass);

  GradcheckOptions bad = opt;
  bad.instances = 2;
  bad.sabotage = 1.05;
  GradcheckReport sab = run_gradcheck(bad);
  CHECK_FALSE(sab.pass);
  CHECK(sab.worst > 1e-3);
}

TEST_CASE("zero-iteration stage is a bitwise no-op") {
  TwinProblem tp(12, 9, 4);
  std::vector<double> params = tp.params;
  OptimState st = make_optim_state(tp.prob.layout, AdamConfig{}, false, false);
  StageConfig stage;
  stage.kind = StageKind::Local;
  stage.iterations = 0;
  stage.weight_knots = {{0, LossWeights{}}};
  std::vector<LossTraceRow> trace;
  Rng rng(3);
  run_stage(tp.prob, stage, SamplerConfig{}, params, st, AdamConfig{}, rng, trace, 0);
  CHECK(trace.empty());
  CHECK(std::memcmp(params.data(), tp.params.data(), params.size() * sizeof(double)) == 0);
}

TEST_CASE("divergence guard halves the rate and aborts after three rejections") {
  TwinProblem tp(12, 9, 4);
  tp.params[tp.prob.layout.delta()] = -1.0;  // invalid focal scale, loss is undefined
  OptimState st = make_optim_state(tp.prob.layout, AdamConfig{}, false, false);
  StageConfig stage;
  stage.kind = StageKind::Local;
  stage.iterations = 10;
  stage.weight_knots = {{0, LossWeights{}}};
  std::vector<LossTraceRow> trace;
  Rng rng(3);
  std::vector<double> params = tp.params;
  CHECK_THROWS_AS(
      run_stage(tp.prob, stage, SamplerConfig{}, params, st, AdamConfig{}, rng, trace, 0),
      std::runtime_error);
  CHECK(st.consecutive_failures == 3);
  CHECK(st.lr_scale == 0.125);
  CHECK(trace.empty());
  CHECK(std::memcmp(params.data(), tp.params.data(), params.size() * sizeof(double)) == 0);
}

TEST_CASE("single-pair scale and shift recovery") {
  // Frame 1 carries the true depth; frame 0 sees an affine-corrupted copy.
  // With poses pinned at the identity and only frame 0's global scale and
  // shift free, the geometric term drives them back to the true values.
  const int W = 16, H = 12;
  ImageBuffer img = textured_image(W, H, 1.0);
  DepthMap truth = smooth_depth(W, H, 2.0);

  std::vector<double> sorted(truth.data().begin(), truth.data().end());
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double a_star = 1.4, b_star = 0.15 * median;

  DepthMap corrupted(W, H, DepthStage::AffineInvariant);
  for (std::size_t i = 0; i < truth.size(); ++i)
    corrupted.data()[i] = (truth.data()[i] - b_star) / a_star;
  corrupted.refresh_validity(kDepthEpsilon);

  EngineProblem prob;
  prob.width = W;
  prob.height = H;
  prob.f0 = init_focal(W, H);
  prob.layout = ParamLayout{2, 4};
  prob.freeze_poses = true;
  prob.fixed_poses = {PoseMatrix::Identity(), PoseMatrix::Identity()};
  prob.frames.push_back(make_engine_frame(&img, &corrupted, nullptr, 4, LwlrConfig{}));
  prob.frames.push_back(make_engine_frame(&img, &truth, nullptr, 4, LwlrConfig{}));

  std::vector<double> params = init_params(prob.layout);
  OptimState st = make_optim_state(prob.layout, AdamConfig{}, true, true);
  // Free only frame 0's global scale and shift.
  for (int i = 0; i < prob.layout.size(); ++i) st.frozen[i] = 1;
  st.frozen[prob.layout.alpha_raw(0)] = 0;
  st.frozen[prob.layout.beta(0)] = 0;

  const LossWeights w{2.0, 0.5, 0.01};
  StageConfig stage;
  stage.kind = StageKind::Local;
  stage.iterations = 1200;
  stage.weight_knots = {{0, w}};
  SamplerConfig sampler;
  Rng rng(11);
  std::vector<LossTraceRow> trace;
  run_stage(prob, stage, sampler, params, st, AdamConfig{}, rng, trace, 0);
  // Anneal for a tight landing.
  st.lr_scale = 0.1;
  stage.iterations = 600;
  run_stage(prob, stage, sampler, params, st, AdamConfig{}, rng, trace, 1200);

  REQUIRE(!trace.empty());
  CHECK(trace.back().total <= trace.front().total);

  const double alpha = ad::softplus(params[prob.layout.alpha_raw(0)]);
  const double beta = params[prob.layout.beta(0)];
  CHECK(std::abs(alpha - a_star) / a_star < 0.02);
  CHECK(std::abs(beta - b_star) / std::abs(b_star) < 0.02);
}

TEST_CASE("full optimization is deterministic and well-formed") {
  const int W = 16, H = 12;
  std::vector<FrameInput> frames;
  for (int f = 0; f < 3; ++f) {
    FrameInput fi{textured_image(W, H, 0.8 * f), smooth_depth(W, H, 2.0 + 0.1 * f), PixelMask{}};
    frames.push_back(std::move(fi));
  }
  OptimizeOptions opt;
  opt.anchor_count = 4;
  opt.schedule_scale = 0.02;  // 40 + 80 iterations
  opt.skip_downsample = true;

  OptimizeResult a = optimize(frames, opt);
  OptimizeResult b = optimize(frames, opt);

  REQUIRE(a.selected == std::vector<int>{0, 1, 2});
  CHECK(a.layout.frames == 3);
  CHECK(a.trace.size() == 120);
  CHECK(a.trace.front().stage == StageKind::Local);
  CHECK(a.trace.back().stage == StageKind::Global);
  CHECK(a.trace.back().iteration == 119);
  REQUIRE(a.depths.size() == 3);
  CHECK(a.depths[0].stage() == DepthStage::ScaleConsistent);
  REQUIRE(a.poses.size() == 3);
  CHECK(a.intrinsics.f0 == init_focal(W, H));
  CHECK(a.globals.size() == 3);

  REQUIRE(a.params.size() == b.params.size());
  CHECK(std::memcmp(a.params.data(), b.params.data(), a.params.size() * sizeof(double)) == 0);
  CHECK(format_loss_trace(a.trace) == format_loss_trace(b.trace));
  for (std::size_t i = 0; i < a.poses.size(); ++i)
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) CHECK(a.poses[i](r, c) == b.poses[i](r, c));
}

TEST_CASE("optimize validates its inputs") {
  std::vector<FrameInput> one;
  one.push_back(FrameInput{textured_image(8, 6, 0.0), smooth_depth(8, 6, 2.0), PixelMask{}});
  CHECK_THROWS_AS(optimize(one, OptimizeOptions{}), std::invalid_argument);

  std::vector<FrameInput> mismatched;
  mismatched.push_back(FrameInput{textured_image(8, 6, 0.0), smooth_depth(8, 6, 2.0), PixelMask{}});
  mismatched.push_back(FrameInput{textured_image(10, 6, 0.0), smooth_depth(10, 6, 2.0), PixelMask{}});
  CHECK_THROWS_AS(optimize(mismatched, OptimizeOptions{}), std::invalid_argument);

  std::vector<FrameInput> frozen_no_gt;
  frozen_no_gt.push_back(FrameInput{textured_image(8, 6, 0.0), smooth_depth(8, 6, 2.0), PixelMask{}});
  frozen_no_gt.push_back(FrameInput{textured_image(8, 6, 1.0), smooth_depth(8, 6, 2.2), PixelMask{}});
  OptimizeOptions opt;
  opt.freeze_poses = true;
  CHECK_THROWS_AS(optimize(frozen_no_gt, opt), std::invalid_argument);
}
