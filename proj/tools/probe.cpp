// Scratch diagnostic: evaluate the loss at ground-truth parameters on a
// synthetic dataset, and dissect a finished run's cloud error.
#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "screcon/fusion.hpp"
#include "screcon/io.hpp"
#include "screcon/loss_engine.hpp"
#include "screcon/metrics.hpp"
#include "screcon/optimizer.hpp"
#include "screcon/pipeline.hpp"
#include "screcon/tape.hpp"

using namespace screcon;
using json = nlohmann::ordered_json;

static void loss_probe(const SequenceBundle& b, const std::string& dir) {
  json cj = load_json_file(dir + "/gt/corruption.json");
  int F = static_cast<int>(b.size());
  int W = b.frames.front().image.width();
  int H = b.frames.front().image.height();

  LwlrConfig lwlr;
  EngineProblem prob;
  prob.layout = ParamLayout{F, 25};
  prob.f0 = init_focal(W, H);
  prob.width = W;
  prob.height = H;
  for (int f = 0; f < F; ++f)
    prob.frames.push_back(make_engine_frame(&b.frames[f].image, &b.frames[f].affine_depth,
                                            b.frames[f].mask.empty() ? nullptr : &b.frames[f].mask,
                                            25, lwlr));

  PackedParams truth;
  truth.frames.resize(F);
  for (int f = 0; f < F; ++f) {
    double as = cj.at("frames")[f].at("alpha").get<double>();
    double bs = cj.at("frames")[f].at("beta").get<double>();
    truth.frames[f].alpha_raw = ad::softplus_inverse(1.0 / as);
    truth.frames[f].beta = -bs / as;
    truth.frames[f].omega.assign(25, 1.0);
  }
  for (int p = 0; p + 1 < F; ++p) {
    Mat3 Ra = b.gt_poses[p].block<3, 3>(0, 0);
    Mat3 Rb = b.gt_poses[p + 1].block<3, 3>(0, 0);
    Vec3 ta = b.gt_poses[p].block<3, 1>(0, 3);
    Vec3 tb = b.gt_poses[p + 1].block<3, 1>(0, 3);
    RelativePose rp;
    rp.r = euler_from_rotation(Ra.transpose() * Rb);
    rp.t = Ra.transpose() * (tb - ta);
    truth.relatives.push_back(rp);
  }
  truth.delta = b.gt_fx / prob.f0;
  std::vector<double> params = pack_params(prob.layout, truth);

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i + 1 < F; ++i) {
    pairs.emplace_back(i, i + 1);
    pairs.emplace_back(i + 1, i);
  }

  LossWeights w{2.0, 1.0, 0.1};
  LossBreakdown bd;
  double total = evaluate_loss(prob, params, pairs, w, &bd);
  std::printf("truth:  pc=%.6f gc=%.6f regu=%.6f total=%.6f\n", bd.pc, bd.gc, bd.regu, total);

  std::vector<double> init = init_params(prob.layout);
  total = evaluate_loss(prob, init, pairs, w, &bd);
  std::printf("init:   pc=%.6f gc=%.6f regu=%.6f total=%.6f\n", bd.pc, bd.gc, bd.regu, total);
}

static void run_probe(const SequenceBundle& b, const std::string& run_dir) {
  Trajectory traj = read_trajectory(run_dir + "/trajectory.txt");
  json ij = load_json_file(run_dir + "/intrinsics.json");
  Intrinsics K;
  K.delta = ij.at("delta").get<double>();
  K.f0 = ij.at("f0").get<double>();
  K.width = b.frames.front().image.width();
  K.height = b.frames.front().image.height();
  PointCloud fused = read_ply(run_dir + "/cloud.ply");
  json mj = load_json_file(run_dir + "/manifest.json");
  double voxel = mj.at("voxel_size").get<double>();

  // Per-frame scale of rectified depth vs GT: spread here smears the TSDF.
  std::printf("per-frame median(pred/gt): ");
  std::vector<DepthMap> rect;
  for (std::size_t k = 0; k < traj.indices.size(); ++k) {
    int idx = traj.indices[k];
    char stem[16];
    std::snprintf(stem, sizeof stem, "%04d", idx);
    DepthMap d = read_pfm(run_dir + "/rectified/" + std::string(stem) + ".pfm",
                          DepthStage::ScaleConsistent);
    const DepthMap& g = b.gt_depths[static_cast<std::size_t>(idx)];
    std::vector<double> ratios;
    for (int y = 0; y < d.height(); ++y)
      for (int x = 0; x < d.width(); ++x)
        if (d.valid(x, y) && g.valid(x, y) && d.at(x, y) > 0.0 && g.at(x, y) > 0.0)
          ratios.push_back(d.at(x, y) / g.at(x, y));
    std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
    std::printf("%.4f ", ratios[ratios.size() / 2]);
    rect.push_back(std::move(d));
  }
  std::printf("\n");

  std::vector<PoseMatrix> gt_sel;
  for (int idx : traj.indices) gt_sel.push_back(b.gt_poses[static_cast<std::size_t>(idx)]);
  SimilarityTransform sim = align_similarity_poses(traj.poses, gt_sel);
  std::printf("pose-align scale=%.6f\n", sim.scale);

  Intrinsics gk;
  gk.delta = 1.0;
  gk.f0 = b.gt_fx;
  gk.width = K.width;
  gk.height = K.height;
  PointCloud gt_cloud;
  for (int idx : traj.indices) {
    PointCloud part = unproject_frame(b.gt_depths[static_cast<std::size_t>(idx)], gk,
                                      b.gt_poses[static_cast<std::size_t>(idx)]);
    gt_cloud.points.insert(gt_cloud.points.end(), part.points.begin(), part.points.end());
  }

  // Raw unprojection of the rectified depths under the estimated poses.
  PointCloud unproj;
  for (std::size_t k = 0; k < traj.indices.size(); ++k) {
    PointCloud part = unproject_frame(rect[k], K, traj.poses[k]);
    unproj.points.insert(unproj.points.end(), part.points.begin(), part.points.end());
  }

  double tau = 2.0 * voxel;
  CloudMetrics cm_fused = metric_cloud(apply_similarity(sim, fused), gt_cloud, tau);
  CloudMetrics cm_unproj = metric_cloud(apply_similarity(sim, unproj), gt_cloud, tau);
  std::printf("fused:  chamfer=%.4f F=%.4f P=%.4f R=%.4f (tau=%.4f, n=%zu)\n", cm_fused.chamfer_l1,
              cm_fused.f_score, cm_fused.precision, cm_fused.recall, tau, fused.size());
  std::printf("unproj: chamfer=%.4f F=%.4f P=%.4f R=%.4f (n=%zu)\n", cm_unproj.chamfer_l1,
              cm_unproj.f_score, cm_unproj.precision, cm_unproj.recall, unproj.size());

  // Directed distance percentiles expose double surfaces vs uniform offsets.
  auto pct = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    auto at = [&](double q) { return v[static_cast<std::size_t>(q * (v.size() - 1))]; };
    std::printf("p50=%.4f p90=%.4f p99=%.4f max=%.4f\n", at(0.5), at(0.9), at(0.99), v.back());
  };
  std::vector<Vec3> fused_aligned = apply_similarity(sim, fused).points;
  std::printf("fused->gt   ");
  pct(nearest_distances(fused_aligned, gt_cloud.points));
  std::printf("gt->fused   ");
  pct(nearest_distances(gt_cloud.points, fused_aligned));
}

int main(int argc, char** argv) {
  std::string dir = argc > 1 ? argv[1] : "/tmp/bench/data";
  SequenceBundle b = load_sequence(dir);
  if (argc > 2)
    run_probe(b, argv[2]);
  else
    loss_probe(b, dir);
  return 0;
}
