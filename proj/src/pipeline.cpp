#include "screcon/pipeline.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "screcon/fusion.hpp"
#include "screcon/io.hpp"
#include "screcon/synth.hpp"

namespace screcon {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string frame_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                   values.end());
  return values[mid];
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("short write: " + path.string());
}

json version_block() {
  json v;
  v["tool"] = kToolVersion;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
               "." + std::to_string(EIGEN_MINOR_VERSION);
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  return v;
}

}  // namespace

json config_to_json(const RunConfig& c) {
  json j;
  j["input_dir"] = c.input_dir;
  j["output_dir"] = c.output_dir;
  j["preset"] = c.preset;
  j["schedule_scale"] = c.schedule_scale;
  j["seed"] = c.seed;
  j["freeze_intrinsics"] = c.freeze_intrinsics;
  j["freeze_poses"] = c.freeze_poses;
  j["voxel_size"] = c.voxel_size;
  j["truncation_voxels"] = c.truncation_voxels;
  j["export_dense_trajectory"] = c.export_dense_trajectory;
  j["anchor_count"] = c.anchor_count;
  j["sampler"] = {{"k", c.sampler.k},
                  {"phi", c.sampler.phi},
                  {"sigma", c.sampler.sigma},
                  {"refs_per_step", c.sampler.refs_per_step}};
  j["lwlr"] = {{"bandwidth", c.lwlr.bandwidth},
               {"lambda", c.lwlr.lambda},
               {"stride", c.lwlr.stride}};
  j["adam"] = {{"beta1", c.adam.beta1},       {"beta2", c.adam.beta2},
               {"eps", c.adam.eps},           {"weight_decay", c.adam.weight_decay},
               {"lr_depth", c.adam.lr_depth}, {"lr_pose", c.adam.lr_pose},
               {"lr_delta", c.adam.lr_delta}};
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  c.input_dir = j.value("input_dir", c.input_dir);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.preset = j.value("preset", c.preset);
  c.schedule_scale = j.value("schedule_scale", c.schedule_scale);
  c.seed = j.value("seed", c.seed);
  c.freeze_intrinsics = j.value("freeze_intrinsics", c.freeze_intrinsics);
  c.freeze_poses = j.value("freeze_poses", c.freeze_poses);
  c.voxel_size = j.value("voxel_size", c.voxel_size);
  c.truncation_voxels = j.value("truncation_voxels", c.truncation_voxels);
  c.export_dense_trajectory = j.value("export_dense_trajectory", c.export_dense_trajectory);
  c.anchor_count = j.value("anchor_count", c.anchor_count);
  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    c.sampler.k = s.value("k", c.sampler.k);
    c.sampler.phi = s.value("phi", c.sampler.phi);
    c.sampler.sigma = s.value("sigma", c.sampler.sigma);
    c.sampler.refs_per_step = s.value("refs_per_step", c.sampler.refs_per_step);
  }
  if (j.contains("lwlr")) {
    const json& s = j.at("lwlr");
    c.lwlr.bandwidth = s.value("bandwidth", c.lwlr.bandwidth);
    c.lwlr.lambda = s.value("lambda", c.lwlr.lambda);
    c.lwlr.stride = s.value("stride", c.lwlr.stride);
  }
  if (j.contains("adam")) {
    const json& s = j.at("adam");
    c.adam.beta1 = s.value("beta1", c.adam.beta1);
    c.adam.beta2 = s.value("beta2", c.adam.beta2);
    c.adam.eps = s.value("eps", c.adam.eps);
    c.adam.weight_decay = s.value("weight_decay", c.adam.weight_decay);
    c.adam.lr_depth = s.value("lr_depth", c.adam.lr_depth);
    c.adam.lr_pose = s.value("lr_pose", c.adam.lr_pose);
    c.adam.lr_delta = s.value("lr_delta", c.adam.lr_delta);
  }
  return c;
}

std::string config_hash(const RunConfig& cfg) {
  std::string dump = config_to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : dump) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void validate_config(const RunConfig& cfg) {
  if (cfg.preset != "indoor" && cfg.preset != "outdoor")
    throw std::invalid_argument("unknown preset '" + cfg.preset + "' (indoor or outdoor)");
  if (cfg.input_dir.empty() || !fs::is_directory(cfg.input_dir))
    throw std::invalid_argument("input directory does not exist: " + cfg.input_dir);
  if (cfg.output_dir.empty())
    throw std::invalid_argument("output directory not set");
  if (!(cfg.schedule_scale > 0.0))
    throw std::invalid_argument("schedule scale must be positive");
  if (!(cfg.truncation_voxels >= 1.0))
    throw std::invalid_argument("truncation must be at least one voxel");
  if (cfg.anchor_count < 4)
    throw std::invalid_argument("anchor count must be at least 4");
}

SequenceBundle load_sequence(const std::string& dir) {
  fs::path root(dir);
  if (!fs::is_directory(root))
    throw std::invalid_argument("load_sequence: no such directory: " + dir);
  fs::path rgb = root / "rgb";
  if (!fs::is_directory(rgb))
    throw std::invalid_argument("load_sequence: missing rgb/ under " + dir);

  std::vector<std::pair<std::string, fs::path>> entries;
  for (const auto& e : fs::directory_iterator(rgb)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    if (ext == ".png" || ext == ".ppm") entries.emplace_back(e.path().filename().string(), e.path());
  }
  std::sort(entries.begin(), entries.end());
  if (entries.empty()) throw std::invalid_argument("load_sequence: no frames in " + rgb.string());

  SequenceBundle b;
  for (const auto& [name, path] : entries) {
    std::string stem = fs::path(name).stem().string();
    FrameInput fi;
    fi.image = read_image(path.string());
    fs::path dp = root / "depth" / (stem + ".pfm");
    if (!fs::exists(dp))
      throw std::runtime_error("load_sequence: missing depth map for frame '" + stem + "'");
    fi.affine_depth = read_pfm(dp.string(), DepthStage::AffineInvariant);
    if (fi.affine_depth.width() != fi.image.width() ||
        fi.affine_depth.height() != fi.image.height())
      throw std::runtime_error("load_sequence: depth/image resolution mismatch at '" + stem + "'");
    if (!b.frames.empty() && (fi.image.width() != b.frames.front().image.width() ||
                              fi.image.height() != b.frames.front().image.height()))
      throw std::runtime_error("load_sequence: resolution changes at frame '" + stem + "'");
    fs::path mp = root / "mask" / (stem + ".png");
    if (fs::exists(mp)) {
      fi.mask = mask_from_image(read_image(mp.string()));
      if (fi.mask.width() != fi.image.width() || fi.mask.height() != fi.image.height())
        throw std::runtime_error("load_sequence: mask resolution mismatch at '" + stem + "'");
    }
    b.stems.push_back(stem);
    b.frames.push_back(std::move(fi));
  }

  fs::path gp = root / "gt" / "poses.txt";
  if (fs::exists(gp)) {
    Trajectory t = read_trajectory(gp.string());
    if (t.indices.size() != b.frames.size())
      throw std::runtime_error("load_sequence: ground-truth trajectory frame count mismatch");
    for (std::size_t i = 0; i < t.indices.size(); ++i)
      if (t.indices[i] != static_cast<int>(i))
        throw std::runtime_error("load_sequence: ground-truth trajectory must list frames 0..N-1");
    b.gt_poses = std::move(t.poses);
  }

  fs::path ip = root / "gt" / "intrinsics.json";
  if (fs::exists(ip)) {
    json j = load_json_file(ip.string());
    b.gt_fx = j.at("fx").get<double>();
    b.gt_fy = j.at("fy").get<double>();
    b.gt_cx = j.at("cx").get<double>();
    b.gt_cy = j.at("cy").get<double>();
    if (!(b.gt_fx > 0.0) || !(b.gt_fy > 0.0))
      throw std::runtime_error("load_sequence: ground-truth focal must be positive");
    b.has_gt_intrinsics = true;
  }

  fs::path gd = root / "gt" / "depth";
  if (fs::is_directory(gd)) {
    for (const std::string& stem : b.stems) {
      fs::path p = gd / (stem + ".pfm");
      if (!fs::exists(p))
        throw std::runtime_error("load_sequence: missing ground-truth depth for '" + stem + "'");
      DepthMap d = read_pfm(p.string(), DepthStage::ScaleConsistent);
      if (d.width() != b.frames.front().image.width() ||
          d.height() != b.frames.front().image.height())
        throw std::runtime_error("load_sequence: ground-truth depth resolution mismatch at '" +
                                 stem + "'");
      b.gt_depths.push_back(std::move(d));
    }
  }
  return b;
}

void cmd_synth(const SynthOptions& opt) {
  if (opt.output_dir.empty()) throw std::invalid_argument("synth: output directory not set");
  if (opt.frames < 2) throw std::invalid_argument("synth: need at least two frames");
  if (opt.field_amplitude < 0.0 || opt.field_amplitude >= 1.0)
    throw std::invalid_argument("synth: field amplitude must be in [0, 1)");

  SyntheticScene scene = make_default_scene(opt.frames, opt.width, opt.height, opt.seed,
                                            opt.rotation_frames);
  const int total = scene.frames();

  std::vector<ImageBuffer> images;
  std::vector<DepthMap> gts;
  std::vector<double> all_depths;
  for (int f = 0; f < total; ++f) {
    auto [img, gt] = render_scene(scene, f);
    for (std::size_t i = 0; i < gt.size(); ++i)
      if (gt.valid_at(i)) all_depths.push_back(gt.data()[i]);
    images.push_back(std::move(img));
    gts.push_back(std::move(gt));
  }

  CorruptionSpec spec;
  if (opt.identity_corruption) {
    spec.alpha_star.assign(static_cast<std::size_t>(total), 1.0);
    spec.beta_star.assign(static_cast<std::size_t>(total), 0.0);
  } else {
    spec = random_corruption(total, median_of(all_depths), opt.seed);
  }
  spec.field_amplitude = opt.field_amplitude;
  spec.seed = opt.seed;

  fs::path root(opt.output_dir);
  fs::create_directories(root / "rgb");
  fs::create_directories(root / "depth");
  fs::create_directories(root / "gt" / "depth");

  for (int f = 0; f < opt.frames; ++f) {
    std::string name = frame_name(f);
    write_png((root / "rgb" / (name + ".png")).string(), images[static_cast<std::size_t>(f)]);
    write_pfm((root / "gt" / "depth" / (name + ".pfm")).string(),
              gts[static_cast<std::size_t>(f)]);
    DepthMap corrupted = corrupt_depth(gts[static_cast<std::size_t>(f)], spec, f);
    write_pfm((root / "depth" / (name + ".pfm")).string(), corrupted);
  }

  Trajectory traj;
  for (int f = 0; f < opt.frames; ++f) traj.indices.push_back(f);
  traj.poses = scene.trajectory;
  export_trajectory(traj, (root / "gt" / "poses.txt").string());

  Intrinsics K = scene.intrinsics();
  json ij;
  ij["fx"] = K.focal();
  ij["fy"] = K.focal();
  ij["cx"] = K.cx();
  ij["cy"] = K.cy();
  save_json_file((root / "gt" / "intrinsics.json").string(), ij);

  json cj;
  cj["seed"] = opt.seed;
  cj["field_amplitude"] = opt.field_amplitude;
  cj["frames"] = json::array();
  for (int f = 0; f < opt.frames; ++f)
    cj["frames"].push_back({{"alpha", spec.alpha_star[static_cast<std::size_t>(f)]},
                            {"beta", spec.beta_star[static_cast<std::size_t>(f)]}});
  save_json_file((root / "gt" / "corruption.json").string(), cj);

  json mj;
  mj["command"] = "synth";
  mj["seed"] = opt.seed;
  mj["frames"] = opt.frames;
  mj["width"] = opt.width;
  mj["height"] = opt.height;
  mj["field_amplitude"] = opt.field_amplitude;
  mj["identity_corruption"] = opt.identity_corruption;
  mj["versions"] = version_block();
  save_json_file((root / "manifest.json").string(), mj);
}

namespace {

// Everything the metric computation needs, shared by reconstruct and eval.
struct RunArtifacts {
  std::vector<int> selected;
  std::vector<DepthMap> depths;   // ScaleConsistent, selected order
  std::vector<PoseMatrix> poses;  // selected order
  Intrinsics intrinsics;
  PointCloud cloud;
  double voxel_size = 0.0;
};

Intrinsics gt_intrinsics_of(const SequenceBundle& bundle) {
  Intrinsics K;
  K.delta = 1.0;
  K.f0 = bundle.gt_fx;
  K.width = bundle.frames.front().image.width();
  K.height = bundle.frames.front().image.height();
  return K;
}

double trajectory_extent(std::span<const PoseMatrix> poses) {
  double best = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i)
    for (std::size_t j = i + 1; j < poses.size(); ++j)
      best = std::max(best,
                      (poses[i].block<3, 1>(0, 3) - poses[j].block<3, 1>(0, 3)).norm());
  return best;
}

json metrics_to_json(const SequenceBundle& bundle, const RunArtifacts& run,
                     MetricsReport* out_report) {
  if (!bundle.has_gt_poses())
    throw std::runtime_error("metrics require gt/poses.txt in the input directory");

  MetricsReport rep;
  json j;

  std::vector<PoseMatrix> gt_sel;
  for (int idx : run.selected) gt_sel.push_back(bundle.gt_poses[static_cast<std::size_t>(idx)]);
  TrajectoryMetrics tm = metric_trajectory(run.poses, gt_sel);
  rep.ate = tm.ate;
  rep.rpe_t = tm.rpe_t;
  rep.rpe_r_deg = tm.rpe_r_deg;
  j["ate"] = rep.ate;
  j["rpe_t"] = rep.rpe_t;
  j["rpe_r_deg"] = rep.rpe_r_deg;
  j["trajectory_extent"] = trajectory_extent(bundle.gt_poses);

  if (!bundle.gt_depths.empty()) {
    std::vector<DepthMap> gt_depth_sel;
    for (int idx : run.selected) gt_depth_sel.push_back(bundle.gt_depths[static_cast<std::size_t>(idx)]);
    DepthMetrics dm = metric_depth(run.depths, gt_depth_sel, true);
    rep.abs_rel = dm.abs_rel;
    rep.delta1 = dm.delta1;
    j["abs_rel"] = rep.abs_rel;
    j["delta1"] = rep.delta1;
    j["depth_scale"] = dm.scale;
  }

  if (bundle.has_gt_intrinsics) {
    rep.fov_abs_rel = metric_fov(run.intrinsics.delta, run.intrinsics.f0,
                                 run.intrinsics.width, bundle.gt_fx);
    j["fov_abs_rel"] = rep.fov_abs_rel;
  }

  if (!bundle.gt_depths.empty() && bundle.has_gt_intrinsics && run.cloud.size() > 0) {
    Intrinsics gk = gt_intrinsics_of(bundle);
    PointCloud gt_cloud;
    for (int idx : run.selected) {
      PointCloud part = unproject_frame(bundle.gt_depths[static_cast<std::size_t>(idx)], gk,
                                        bundle.gt_poses[static_cast<std::size_t>(idx)]);
      gt_cloud.points.insert(gt_cloud.points.end(), part.points.begin(), part.points.end());
    }
    // The cloud alignment comes from exact pixel correspondences: each
    // rectified depth pixel and its ground-truth counterpart unproject to a
    // matched point pair. A trajectory-only fit would be ill-conditioned
    // here (camera centers span a nearly one-dimensional arc) and would
    // ignore where the surfaces actually sit. tau lives in fused-cloud
    // units, so it is mapped through the alignment scale.
    std::vector<Vec3> corr_from, corr_to;
    for (std::size_t k = 0; k < run.selected.size(); ++k) {
      const int idx = run.selected[k];
      const DepthMap& pd = run.depths[k];
      const DepthMap& gd = bundle.gt_depths[static_cast<std::size_t>(idx)];
      const PoseMatrix& pp = run.poses[k];
      const PoseMatrix& gp = bundle.gt_poses[static_cast<std::size_t>(idx)];
      PointCloud ppart = unproject_frame(pd, run.intrinsics, pp);
      PointCloud gpart = unproject_frame(gd, gk, gp);
      std::size_t pi = 0, gi = 0;
      for (int y = 0; y < pd.height(); ++y)
        for (int x = 0; x < pd.width(); ++x) {
          const bool pv = pd.valid(x, y);
          const bool gv = gd.valid(x, y);
          if (pv && gv) {
            corr_from.push_back(ppart.points[pi]);
            corr_to.push_back(gpart.points[gi]);
          }
          pi += pv ? 1 : 0;
          gi += gv ? 1 : 0;
        }
    }
    SimilarityTransform sim = align_similarity(corr_from, corr_to);
    PointCloud aligned = apply_similarity(sim, run.cloud);
    double tau = 2.0 * run.voxel_size * sim.scale;
    CloudMetrics cm = metric_cloud(aligned, gt_cloud, tau);
    rep.chamfer_l1 = cm.chamfer_l1;
    rep.f_score = cm.f_score;
    j["chamfer_l1"] = rep.chamfer_l1;
    j["f_score"] = rep.f_score;
    j["precision"] = cm.precision;
    j["recall"] = cm.recall;
    j["voxel_size"] = run.voxel_size;
    j["tau"] = tau;
  }

  j["selected_frames"] = run.selected.size();
  if (out_report) *out_report = rep;
  return j;
}

}  // namespace

void cmd_reconstruct(const RunConfig& cfg) {
  validate_config(cfg);
  SequenceBundle bundle = load_sequence(cfg.input_dir);
  if (bundle.size() < 2) throw std::runtime_error("reconstruct: need at least two frames");
  int width = bundle.frames.front().image.width();
  int height = bundle.frames.front().image.height();

  OptimizeOptions oo;
  oo.sampler = cfg.sampler;
  oo.sampler.seed = cfg.seed;
  oo.lwlr = cfg.lwlr;
  oo.adam = cfg.adam;
  oo.anchor_count = cfg.anchor_count;
  oo.outdoor = cfg.preset == "outdoor";
  oo.schedule_scale = cfg.schedule_scale;
  if (cfg.freeze_poses) {
    if (!bundle.has_gt_poses())
      throw std::invalid_argument("reconstruct: --freeze-poses requires gt/poses.txt");
    oo.freeze_poses = true;
    oo.gt_poses = bundle.gt_poses;
  }
  if (cfg.freeze_intrinsics) {
    if (!bundle.has_gt_intrinsics)
      throw std::invalid_argument("reconstruct: --freeze-intrinsics requires gt/intrinsics.json");
    oo.freeze_delta = true;
    oo.delta_init = bundle.gt_fx / init_focal(width, height);
  }

  OptimizeResult res = optimize(bundle.frames, oo);

  fs::path out(cfg.output_dir);
  fs::create_directories(out / "rectified");

  for (std::size_t i = 0; i < res.selected.size(); ++i) {
    const std::string& stem = bundle.stems[static_cast<std::size_t>(res.selected[i])];
    write_pfm((out / "rectified" / (stem + ".pfm")).string(), res.depths[i]);
  }

  Trajectory traj;
  if (cfg.freeze_poses) {
    // Poses were inputs, not estimates; the full input trajectory is echoed.
    for (std::size_t i = 0; i < bundle.size(); ++i) traj.indices.push_back(static_cast<int>(i));
    traj.poses = bundle.gt_poses;
  } else {
    traj.indices = res.selected;
    traj.poses = res.poses;
  }
  export_trajectory(traj, (out / "trajectory.txt").string());
  if (cfg.export_dense_trajectory) {
    Trajectory dense = cfg.freeze_poses
                           ? traj
                           : densify_trajectory(Trajectory{res.selected, res.poses},
                                                static_cast<int>(bundle.size()));
    export_trajectory(dense, (out / "dense_trajectory.txt").string());
  }

  json ij;
  ij["delta"] = res.intrinsics.delta;
  ij["f0"] = res.intrinsics.f0;
  ij["focal"] = res.intrinsics.focal();
  ij["fov_degrees"] =
      2.0 * std::atan(width / (2.0 * res.intrinsics.focal())) * 180.0 / std::numbers::pi;
  ij["width"] = width;
  ij["height"] = height;
  save_json_file((out / "intrinsics.json").string(), ij);

  write_text_file(out / "loss_trace.csv", format_loss_trace(res.trace));

  // Fusion: size the voxel grid from the unprojected extent, then integrate
  // every selected rectified frame.
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::size_t i = 0; i < res.selected.size(); ++i) {
    PointCloud part = unproject_frame(res.depths[i], res.intrinsics, res.poses[i]);
    for (const Vec3& p : part.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  if (!lo.allFinite() || !hi.allFinite())
    throw std::runtime_error("reconstruct: no valid depth to fuse");
  double voxel = cfg.voxel_size > 0.0 ? cfg.voxel_size : (hi - lo).norm() / 128.0;
  TsdfConfig tc = fit_tsdf_config(lo, hi, voxel, cfg.truncation_voxels);
  TsdfVolume volume(tc);
  for (std::size_t i = 0; i < res.selected.size(); ++i)
    volume.integrate(res.depths[i], res.intrinsics, res.poses[i]);
  PointCloud surface = extract_surface_cloud(volume);
  export_ply(surface, (out / "cloud.ply").string());

  if (bundle.has_gt_poses()) {
    RunArtifacts run;
    run.selected = res.selected;
    run.depths = res.depths;
    run.poses = res.poses;
    run.intrinsics = res.intrinsics;
    run.cloud = surface;
    run.voxel_size = voxel;
    json mj = metrics_to_json(bundle, run, nullptr);
    save_json_file((out / "metrics.json").string(), mj);
  }

  json manifest;
  manifest["command"] = "reconstruct";
  manifest["config_hash"] = config_hash(cfg);
  manifest["seed"] = cfg.seed;
  manifest["frames"] = bundle.size();
  manifest["selected"] = res.selected;
  manifest["voxel_size"] = voxel;
  manifest["surface_points"] = surface.size();
  manifest["versions"] = version_block();
  manifest["config"] = config_to_json(cfg);
  save_json_file((out / "manifest.json").string(), manifest);
}

MetricsReport cmd_eval(const std::string& input_dir, const std::string& output_dir) {
  SequenceBundle bundle = load_sequence(input_dir);
  if (!bundle.has_gt_poses())
    throw std::runtime_error("eval: input has no gt/poses.txt");
  fs::path out(output_dir);
  if (!fs::is_directory(out)) throw std::invalid_argument("eval: no such directory: " + output_dir);

  RunArtifacts run;
  for (std::size_t i = 0; i < bundle.stems.size(); ++i) {
    fs::path p = out / "rectified" / (bundle.stems[i] + ".pfm");
    if (!fs::exists(p)) continue;
    run.selected.push_back(static_cast<int>(i));
    run.depths.push_back(read_pfm(p.string(), DepthStage::ScaleConsistent));
  }
  if (run.selected.size() < 2)
    throw std::runtime_error("eval: fewer than two rectified frames in " + output_dir);

  Trajectory traj = read_trajectory((out / "trajectory.txt").string());
  for (int idx : run.selected) {
    auto it = std::find(traj.indices.begin(), traj.indices.end(), idx);
    if (it == traj.indices.end())
      throw std::runtime_error("eval: trajectory.txt lacks frame " + std::to_string(idx));
    run.poses.push_back(traj.poses[static_cast<std::size_t>(it - traj.indices.begin())]);
  }

  json ij = load_json_file((out / "intrinsics.json").string());
  run.intrinsics.delta = ij.at("delta").get<double>();
  run.intrinsics.f0 = ij.at("f0").get<double>();
  run.intrinsics.width = bundle.frames.front().image.width();
  run.intrinsics.height = bundle.frames.front().image.height();

  run.cloud = read_ply((out / "cloud.ply").string());
  json manifest = load_json_file((out / "manifest.json").string());
  run.voxel_size = manifest.at("voxel_size").get<double>();

  MetricsReport rep;
  json mj = metrics_to_json(bundle, run, &rep);
  save_json_file((out / "metrics.json").string(), mj);
  return rep;
}

int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out) {
  GradcheckReport rep = run_gradcheck(opt);
  char line[128];
  for (int g = 0; g < kParamGroupCount; ++g) {
    std::snprintf(line, sizeof line, "  %-12s max rel err %.3e  (%d checks)\n",
                  to_string(static_cast<ParamGroup>(g)), rep.groups[static_cast<std::size_t>(g)].max_rel_err,
                  rep.groups[static_cast<std::size_t>(g)].checks);
    out << line;
  }
  std::snprintf(line, sizeof line, "gradcheck: %s (worst %.3e, tolerance %.1e)\n",
                rep.pass ? "PASS" : "FAIL", rep.worst, opt.tolerance);
  out << line;
  return rep.pass ? 0 : 1;
}

}  // namespace screcon
