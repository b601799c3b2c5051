#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "screcon/sampler.hpp"

using namespace screcon;

namespace {

ImageBuffer patterned_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer img(w, h, 3);
  for (auto& v : img.data()) v = rng.uniform(0.0, 1.0);
  return img;
}

}  // namespace

TEST_CASE("frame_similarity basics") {
  ImageBuffer a = patterned_image(64, 48, 1);
  CHECK(frame_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  ImageBuffer b = patterned_image(64, 48, 2);
  CHECK(frame_similarity(a, b) < 0.5);  // independent noise decorrelates

  ImageBuffer c1(64, 48, 3, 0.4), c2(64, 48, 3, 0.4);
  CHECK(frame_similarity(c1, c2) == 1.0);  // equal constants count as identical
}

TEST_CASE("downsample_frames on identical frames keeps only frame 0") {
  std::vector<ImageBuffer> frames(30, patterned_image(32, 24, 3));
  SamplerConfig cfg;
  auto sel = downsample_frames(frames, cfg);
  CHECK(sel == std::vector<int>{0});
}

TEST_CASE("downsample_frames with sigma 1 takes every changing frame") {
  std::vector<ImageBuffer> frames;
  for (int i = 0; i < 6; ++i) frames.push_back(patterned_image(32, 24, 10 + static_cast<std::uint64_t>(i)));
  SamplerConfig cfg;
  cfg.sigma = 1.0;
  auto sel = downsample_frames(frames, cfg);
  CHECK(sel == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("downsample_frames detects a hard scene cut and fills the gap") {
  ImageBuffer scene_a = patterned_image(32, 24, 20);
  ImageBuffer scene_b = patterned_image(32, 24, 21);
  std::vector<ImageBuffer> frames;
  for (int i = 0; i < 20; ++i) frames.push_back(i < 10 ? scene_a : scene_b);
  SamplerConfig cfg;  // sigma 0.85
  auto sel = downsample_frames(frames, cfg);
  REQUIRE(sel.size() == 5);
  CHECK(sel.front() == 0);
  CHECK(sel.back() == 10);
  // Three strictly interior, strictly increasing inserts.
  for (std::size_t s = 0; s + 1 < sel.size(); ++s) CHECK(sel[s] < sel[s + 1]);
  for (std::size_t s = 1; s + 1 < sel.size(); ++s) {
    CHECK(sel[s] > 0);
    CHECK(sel[s] < 10);
  }
}

TEST_CASE("downsample_frames rejects empty input and always keeps frame 0") {
  SamplerConfig cfg;
  CHECK_THROWS_AS(downsample_frames(std::span<const ImageBuffer>{}, cfg), std::invalid_argument);

  std::vector<ImageBuffer> frames;
  for (int i = 0; i < 12; ++i)
    frames.push_back(patterned_image(32, 24, 30 + static_cast<std::uint64_t>(i % 4)));
  auto sel = downsample_frames(frames, cfg);
  REQUIRE_FALSE(sel.empty());
  CHECK(sel.front() == 0);
  for (std::size_t s = 0; s + 1 < sel.size(); ++s) CHECK(sel[s] < sel[s + 1]);
}

TEST_CASE("local_probabilities matches the k-nearest rule") {
  SUBCASE("interior frame, 13 frames, k=6") {
    KeyframeSchedule sched = local_probabilities(13, 6);
    const auto& ref = sched.refs[6];
    CHECK(ref.candidates == std::vector<int>{3, 4, 5, 7, 8, 9});
    for (double w : ref.weights) CHECK(w == doctest::Approx(1.0 / 6).epsilon(1e-15));
  }
  SUBCASE("boundary frame gets the nearest k on one side") {
    KeyframeSchedule sched = local_probabilities(13, 6);
    const auto& ref = sched.refs[0];
    CHECK(ref.candidates == std::vector<int>{1, 2, 3, 4, 5, 6});
    for (double w : ref.weights) CHECK(w == doctest::Approx(1.0 / 6).epsilon(1e-15));
  }
  SUBCASE("fewer than k neighbors renormalizes") {
    KeyframeSchedule sched = local_probabilities(5, 6);
    const auto& ref = sched.refs[2];
    CHECK(ref.candidates.size() == 4);
    for (double w : ref.weights) CHECK(w == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("weights always sum to 1") {
    for (int p : {2, 3, 7, 13}) {
      KeyframeSchedule sched = local_probabilities(p, 6);
      for (const auto& ref : sched.refs) {
        double sum = 0.0;
        for (double w : ref.weights) sum += w;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
  SUBCASE("rejects degenerate frame counts") {
    CHECK_THROWS_AS(local_probabilities(1, 6), std::invalid_argument);
  }
}

TEST_CASE("relative_angle from rotation matrices") {
  PoseMatrix a = PoseMatrix::Identity();
  CHECK(relative_angle(a, a) == 0.0);

  RelativePose rp;
  rp.r = Vec3(0, 0, std::numbers::pi / 2);
  PoseMatrix b = make_relative_pose(rp);
  CHECK(relative_angle(a, b) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));

  Rng rng(61);
  for (int i = 0; i < 100; ++i) {
    RelativePose x, y;
    for (int d = 0; d < 3; ++d) {
      x.r[d] = rng.uniform(-2.0, 2.0);
      y.r[d] = rng.uniform(-2.0, 2.0);
      x.t[d] = rng.uniform(-1.0, 1.0);
      y.t[d] = rng.uniform(-1.0, 1.0);
    }
    PoseMatrix pi = make_relative_pose(x), pj = make_relative_pose(y);
    CHECK(relative_angle(pi, pj) == doctest::Approx(relative_angle(pj, pi)).epsilon(1e-12));
  }
}

TEST_CASE("angle_tent piecewise values") {
  const double phi = std::numbers::pi / 4;
  CHECK(angle_tent(phi, phi) == doctest::Approx(1.0 / phi).epsilon(1e-15));
  CHECK(angle_tent(2.0 * phi, phi) == 0.0);
  CHECK(angle_tent(phi / 2, phi) == doctest::Approx(1.0 / (2.0 * phi)).epsilon(1e-15));
  CHECK(angle_tent(0.0, phi) == 0.0);
  CHECK(angle_tent(3.0 * phi, phi) == 0.0);
  // Continuity across the peak and down to the far edge.
  CHECK(angle_tent(phi + 1e-9, phi) == doctest::Approx(1.0 / phi).epsilon(1e-6));
  CHECK(angle_tent(2.0 * phi - 1e-9, phi) == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
}

TEST_CASE("global_probabilities matches the piecewise oracle") {
  // Frames rotated about z by i * (pi/16): a spread of relative angles in
  // and out of the tent's support.
  const int P = 9;
  std::vector<PoseMatrix> poses;
  for (int i = 0; i < P; ++i) {
    RelativePose rp;
    rp.r = Vec3(0, 0, i * std::numbers::pi / 16);
    poses.push_back(make_relative_pose(rp));
  }
  SamplerConfig cfg;
  KeyframeSchedule sched = global_probabilities(poses, cfg);
  KeyframeSchedule local = local_probabilities(P, cfg.k);

  for (int i = 0; i < P; ++i) {
    // Oracle: raw w = (p_l + tent(theta))/2 over all j != i, normalized.
    std::map<int, double> raw;
    double sum = 0.0;
    for (int j = 0; j < P; ++j) {
      if (j == i) continue;
      double pl = 0.0;
      const auto& lref = local.refs[static_cast<std::size_t>(i)];
      for (std::size_t c = 0; c < lref.candidates.size(); ++c)
        if (lref.candidates[c] == j) pl = lref.weights[c];
      const double theta = std::abs(i - j) * std::numbers::pi / 16;
      double tent = 0.0;
      const double phi = cfg.phi;
      if (theta > 0 && theta <= phi) tent = theta / (phi * phi);
      else if (theta > phi && theta < 2 * phi) tent = 2 / phi - theta / (phi * phi);
      const double w = 0.5 * (pl + tent);
      if (w > 0) {
        raw[j] = w;
        sum += w;
      }
    }
    const auto& ref = sched.refs[static_cast<std::size_t>(i)];
    REQUIRE(ref.candidates.size() == raw.size());
    double check_sum = 0.0;
    for (std::size_t c = 0; c < ref.candidates.size(); ++c) {
      CHECK(ref.weights[c] == doctest::Approx(raw[ref.candidates[c]] / sum).epsilon(1e-14));
      check_sum += ref.weights[c];
    }
    CHECK(check_sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("global_probabilities with identity poses reduces to the local schedule") {
  std::vector<PoseMatrix> poses(7, PoseMatrix::Identity());
  SamplerConfig cfg;
  KeyframeSchedule got = global_probabilities(poses, cfg);
  KeyframeSchedule want = local_probabilities(7, cfg.k);
  for (std::size_t i = 0; i < got.refs.size(); ++i) {
    CHECK(got.refs[i].candidates == want.refs[i].candidates);
    for (std::size_t c = 0; c < got.refs[i].weights.size(); ++c)
      CHECK(got.refs[i].weights[c] == doctest::Approx(want.refs[i].weights[c]).epsilon(1e-13));
  }
}

TEST_CASE("sample_pairs is deterministic and respects the candidate sets") {
  KeyframeSchedule sched = local_probabilities(13, 6);
  Rng rng1(99), rng2(99);
  auto a = sample_pairs(sched, 50, rng1);
  auto b = sample_pairs(sched, 50, rng2);
  CHECK(a == b);
  CHECK(a.size() == 13);  // every frame is a reference when P < refs_per_step

  std::vector<bool> seen(13, false);
  for (auto [i, j] : a) {
    CHECK_FALSE(seen[static_cast<std::size_t>(i)]);  // without replacement
    seen[static_cast<std::size_t>(i)] = true;
    CHECK(std::abs(i - j) <= 6);
    CHECK(i != j);
  }
}

TEST_CASE("sample_pairs on two frames always pairs them") {
  KeyframeSchedule sched = local_probabilities(2, 6);
  Rng rng(7);
  auto pairs = sample_pairs(sched, 50, rng);
  REQUIRE(pairs.size() == 2);
  for (auto [i, j] : pairs) CHECK(j == 1 - i);
}

TEST_CASE("sample_pairs empirical frequencies match the schedule within 3 sigma") {
  // Non-uniform schedule: global weights over a small rotating trajectory.
  const int P = 5;
  std::vector<PoseMatrix> poses;
  for (int i = 0; i < P; ++i) {
    RelativePose rp;
    rp.r = Vec3(0, i * 0.15, 0);
    poses.push_back(make_relative_pose(rp));
  }
  SamplerConfig cfg;
  cfg.k = 2;
  KeyframeSchedule sched = global_probabilities(poses, cfg);

  const int draws = 100000;
  Rng rng(12345);
  std::map<std::pair<int, int>, int> counts;
  for (int d = 0; d < draws; ++d) {
    auto pairs = sample_pairs(sched, P, rng);
    for (auto& pr : pairs) ++counts[pr];
  }
  // Every reference appears exactly `draws` times; per-candidate counts are
  // binomial(draws, w).
  for (int i = 0; i < P; ++i) {
    const auto& ref = sched.refs[static_cast<std::size_t>(i)];
    for (std::size_t c = 0; c < ref.candidates.size(); ++c) {
      const double w = ref.weights[c];
      const double expect = draws * w;
      const double sigma = std::sqrt(draws * w * (1.0 - w));
      const double got = counts[{i, ref.candidates[c]}];
      CHECK(std::abs(got - expect) <= 3.0 * sigma);
    }
  }
}
