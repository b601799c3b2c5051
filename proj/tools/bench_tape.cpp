// Microbenchmark for the reverse-mode tape on a warp-shaped workload.
// Records a batch of fused warp nodes plus grid samples, then times
// repeated rewind/record/backward cycles the way the optimizer drives it.

#include <chrono>
#include <cstdio>
#include <vector>

#include "screcon/geometry.hpp"
#include "screcon/rng.hpp"
#include "screcon/tape.hpp"

using namespace screcon;
using ad::Tape;
using ad::TapeScope;
using ad::Var;

int main() {
  const int W = 384, H = 288;
  const int stride = 2;
  Rng rng(7);

  std::vector<double> depth(static_cast<std::size_t>(W) * H);
  std::vector<double> image(static_cast<std::size_t>(W) * H * 3);
  for (auto& d : depth) d = rng.uniform(1.0, 4.0);
  for (auto& c : image) c = rng.uniform(0.0, 1.0);

  Mat3 R = euler_to_rotation(Vec3(0.01, -0.02, 0.015));
  Vec3 t(0.05, -0.03, 0.08);
  const double f = init_focal(W, H);

  Tape tape;
  TapeScope scope(tape);

  const int iters = 40;
  std::size_t nodes = 0;
  double sink = 0.0;
  auto start = std::chrono::steady_clock::now();
  for (int it = 0; it < iters; ++it) {
    tape.rewind();
    // Leaves: pose (9 + 3), focal.
    RigidT<Var> rel;
    for (int i = 0; i < 9; ++i)
      rel.R.m[static_cast<std::size_t>(i)] = Var{tape.leaf(R(i / 3, i % 3))};
    rel.t = {Var{tape.leaf(t[0])}, Var{tape.leaf(t[1])}, Var{tape.leaf(t[2])}};
    Var fv{tape.leaf(f)};
    Var inv_f = 1.0 / fv;
    CameraT<Var> cam{fv, inv_f, W / 2.0, H / 2.0};

    std::vector<Var> terms;
    std::vector<double> weights;
    for (int v = 0; v < H; v += stride) {
      for (int u = 0; u < W; u += stride) {
        Var d{tape.leaf(depth[static_cast<std::size_t>(v) * W + u])};
        auto wp = warp_pixel(rel, cam, static_cast<double>(u), static_cast<double>(v), d);
        const double uu = tape.value(wp.u.idx), vv = tape.value(wp.v.idx);
        if (uu < 0 || uu > W - 1 || vv < 0 || vv > H - 1) continue;
        Var c0 = sample_const_grid(image.data(), W, H, 3, 0, wp.u, wp.v);
        Var c1 = sample_const_grid(image.data(), W, H, 3, 1, wp.u, wp.v);
        Var c2 = sample_const_grid(image.data(), W, H, 3, 2, wp.u, wp.v);
        Var resid = ad::abs(c0 - 0.4) + ad::abs(c1 - 0.5) + ad::abs(c2 - 0.6) + wp.depth * 0.01;
        terms.push_back(resid);
        weights.push_back(1.0 / ((W / stride) * (H / stride)));
      }
    }
    Var loss = ad::linear_combination(terms, weights, 0.0);
    tape.backward(loss.idx);
    sink += tape.value(loss.idx) + tape.adjoint(fv.idx);
    nodes += tape.size();
  }
  auto stop = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(stop - start).count();
  std::printf("iters=%d pixels/iter=%d nodes/iter=%zu total_nodes=%zu\n", iters,
              (W / stride) * (H / stride), nodes / iters, nodes);
  std::printf("time=%.3fs  node-ops/s=%.3g  iter/s=%.2f  (sink %.6f)\n", secs,
              static_cast<double>(nodes) / secs, iters / secs, sink);
  return 0;
}
