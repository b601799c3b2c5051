#include "screcon/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace screcon {

namespace {

constexpr int kThumbW = 32;
constexpr int kThumbH = 24;
constexpr int kLookAhead = 20;

// Grayscale box-filtered thumbnail; channel mean stands in for luma.
std::vector<double> thumbnail(const ImageBuffer& img) {
  std::vector<double> out(static_cast<std::size_t>(kThumbW) * kThumbH, 0.0);
  const int W = img.width(), H = img.height(), C = img.channels();
  for (int ty = 0; ty < kThumbH; ++ty) {
    const int y0 = ty * H / kThumbH;
    const int y1 = std::max(y0 + 1, (ty + 1) * H / kThumbH);
    for (int tx = 0; tx < kThumbW; ++tx) {
      const int x0 = tx * W / kThumbW;
      const int x1 = std::max(x0 + 1, (tx + 1) * W / kThumbW);
      double sum = 0.0;
      for (int y = y0; y < std::min(y1, H); ++y)
        for (int x = x0; x < std::min(x1, W); ++x)
          for (int c = 0; c < C; ++c) sum += img.at(x, y, c);
      const int area = (std::min(y1, H) - y0) * (std::min(x1, W) - x0) * C;
      out[static_cast<std::size_t>(ty) * kThumbW + tx] = sum / std::max(area, 1);
    }
  }
  return out;
}

double ncc(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::abs(ma - mb) < 1e-12 ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

double frame_similarity(const ImageBuffer& a, const ImageBuffer& b) {
  const auto ta = thumbnail(a);
  const auto tb = thumbnail(b);
  return ncc(ta, tb);
}

std::vector<int> downsample_frames(std::span<const ImageBuffer> frames, const SamplerConfig& cfg) {
  const int n = static_cast<int>(frames.size());
  if (n == 0) throw std::invalid_argument("downsample_frames: empty sequence");
  if (!(cfg.sigma > 0.0 && cfg.sigma <= 1.0))
    throw std::invalid_argument("downsample_frames: sigma must be in (0, 1]");

  std::vector<std::vector<double>> thumbs;
  thumbs.reserve(frames.size());
  for (const auto& f : frames) thumbs.push_back(thumbnail(f));

  // Stage 1: pivot walk. The walk ends when a full look-ahead window stays
  // above the threshold; appearance is then considered static.
  std::vector<int> pivots = {0};
  int pivot = 0;
  while (true) {
    int next = -1;
    const int limit = std::min(pivot + kLookAhead, n - 1);
    for (int i = pivot + 1; i <= limit; ++i) {
      if (ncc(thumbs[static_cast<std::size_t>(pivot)], thumbs[static_cast<std::size_t>(i)]) <
          cfg.sigma) {
        next = i;
        break;
      }
    }
    if (next < 0) break;
    pivots.push_back(next);
    pivot = next;
  }

  // Stage 2: even insertion between adjacent pivots, capped by the gap.
  std::vector<int> selected = pivots;
  for (std::size_t s = 0; s + 1 < pivots.size(); ++s) {
    const int a = pivots[s], b = pivots[s + 1];
    const int gap = b - a;
    const int m = std::min(3, gap - 1);
    for (int q = 1; q <= m; ++q) selected.push_back(a + gap * q / (m + 1));
  }
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
  return selected;
}

KeyframeSchedule local_probabilities(int frame_count, int k) {
  if (frame_count < 2) throw std::invalid_argument("local_probabilities: need at least 2 frames");
  if (k < 1) throw std::invalid_argument("local_probabilities: k must be >= 1");

  KeyframeSchedule sched;
  sched.refs.resize(static_cast<std::size_t>(frame_count));
  for (int i = 0; i < frame_count; ++i) {
    auto& ref = sched.refs[static_cast<std::size_t>(i)];
    // k temporally nearest other frames; ties at equal distance resolved
    // toward the earlier frame for determinism.
    std::vector<int> order;
    for (int j = 0; j < frame_count; ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [i](int a, int b) {
      const int da = std::abs(a - i), db = std::abs(b - i);
      if (da != db) return da < db;
      return a < b;
    });
    const int take = std::min<int>(k, static_cast<int>(order.size()));
    ref.candidates.assign(order.begin(), order.begin() + take);
    std::sort(ref.candidates.begin(), ref.candidates.end());
    ref.weights.assign(ref.candidates.size(), 1.0 / static_cast<double>(k));
    double sum = static_cast<double>(take) / static_cast<double>(k);
    for (auto& w : ref.weights) w /= sum;
  }
  return sched;
}

double relative_angle(const PoseMatrix& pose_i, const PoseMatrix& pose_j) {
  const Mat3 ri = pose_i.block<3, 3>(0, 0);
  const Mat3 rj = pose_j.block<3, 3>(0, 0);
  const double tr = (ri.transpose() * rj).trace();
  return std::acos(std::clamp((tr - 1.0) / 2.0, -1.0, 1.0));
}

double angle_tent(double theta, double phi) {
  if (theta > 0.0 && theta <= phi) return theta / (phi * phi);
  if (theta > phi && theta < 2.0 * phi) return 2.0 / phi - theta / (phi * phi);
  return 0.0;
}

KeyframeSchedule global_probabilities(std::span<const PoseMatrix> poses, const SamplerConfig& cfg) {
  const int P = static_cast<int>(poses.size());
  KeyframeSchedule local = local_probabilities(P, cfg.k);
  KeyframeSchedule sched;
  sched.refs.resize(static_cast<std::size_t>(P));
  for (int i = 0; i < P; ++i) {
    auto& ref = sched.refs[static_cast<std::size_t>(i)];
    const auto& loc = local.refs[static_cast<std::size_t>(i)];
    double sum = 0.0;
    for (int j = 0; j < P; ++j) {
      if (j == i) continue;
      double pl = 0.0;
      for (std::size_t c = 0; c < loc.candidates.size(); ++c)
        if (loc.candidates[c] == j) {
          pl = loc.weights[c];
          break;
        }
      const double theta = relative_angle(poses[static_cast<std::size_t>(i)],
                                          poses[static_cast<std::size_t>(j)]);
      const double w = 0.5 * (pl + angle_tent(theta, cfg.phi));
      if (w > 0.0) {
        ref.candidates.push_back(j);
        ref.weights.push_back(w);
        sum += w;
      }
    }
    if (ref.candidates.empty() || sum <= 0.0) {
      ref = loc;  // all-zero tent and no local mass: keep the local schedule
      continue;
    }
    for (auto& w : ref.weights) w /= sum;
  }
  return sched;
}

std::vector<std::pair<int, int>> sample_pairs(const KeyframeSchedule& schedule, int refs_per_step,
                                              Rng& rng) {
  const int P = static_cast<int>(schedule.refs.size());
  if (P < 2) throw std::invalid_argument("sample_pairs: need at least 2 frames");
  if (refs_per_step < 1) throw std::invalid_argument("sample_pairs: need at least 1 reference");

  std::vector<std::pair<int, int>> pairs;
  const std::size_t n_refs = std::min<std::size_t>(static_cast<std::size_t>(refs_per_step),
                                                   static_cast<std::size_t>(P));
  const std::vector<int> refs =
      rng.sample_without_replacement(static_cast<std::size_t>(P), n_refs);
  for (int r : refs) {
    const auto& ref = schedule.refs[static_cast<std::size_t>(r)];
    if (ref.candidates.empty()) continue;
    const std::size_t pick = rng.pick_weighted(ref.weights);
    pairs.emplace_back(r, ref.candidates[pick]);
  }
  return pairs;
}

}  // namespace screcon
