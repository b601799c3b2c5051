#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "screcon/metrics.hpp"
#include "screcon/optimizer.hpp"

namespace screcon {

inline constexpr const char* kToolVersion = "1.0.0";

// Everything a reconstruction run depends on. Serializes to JSON so a run
// can be replayed from its manifest alone.
struct RunConfig {
  std::string input_dir;
  std::string output_dir;
  std::string preset = "indoor";  // "indoor" or "outdoor"
  double schedule_scale = 1.0;
  std::uint64_t seed = 0;
  bool freeze_intrinsics = false;
  bool freeze_poses = false;
  double voxel_size = 0.0;  // <= 0 selects cloud-extent / 128
  double truncation_voxels = 4.0;
  bool export_dense_trajectory = false;
  int anchor_count = 25;
  SamplerConfig sampler;
  LwlrConfig lwlr;
  AdamConfig adam;
};

nlohmann::ordered_json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::ordered_json& j);

// 64-bit FNV-1a over the canonical JSON dump, as fixed-width hex.
std::string config_hash(const RunConfig& cfg);

// Throws std::invalid_argument when the preset is unknown or a referenced
// path is missing.
void validate_config(const RunConfig& cfg);

// An input directory parsed into memory. Layout:
//   rgb/NNNN.png|ppm         frames, sorted lexicographically
//   depth/NNNN.pfm           one per frame, matched by stem
//   mask/NNNN.png            optional per-frame eligibility masks
//   gt/poses.txt             optional trajectory, enables evaluation
//   gt/intrinsics.json       optional {fx, fy, cx, cy}
//   gt/depth/NNNN.pfm        optional metric depth per frame
struct SequenceBundle {
  std::vector<std::string> stems;
  std::vector<FrameInput> frames;
  std::vector<PoseMatrix> gt_poses;  // empty or one per frame
  std::vector<DepthMap> gt_depths;   // empty or one per frame
  bool has_gt_intrinsics = false;
  double gt_fx = 0.0, gt_fy = 0.0, gt_cx = 0.0, gt_cy = 0.0;

  std::size_t size() const { return frames.size(); }
  bool has_gt_poses() const { return !gt_poses.empty(); }
};

SequenceBundle load_sequence(const std::string& dir);

struct SynthOptions {
  std::string output_dir;
  int frames = 20;
  int width = 64;
  int height = 48;
  std::uint64_t seed = 7;
  double field_amplitude = 0.0;   // smooth multiplicative corruption field
  bool identity_corruption = false;
  int rotation_frames = 0;        // appended pure-rotation stress segment
};

// Renders the procedural benchmark scene into a load_sequence layout with
// ground-truth sidecars and a per-frame corruption log. Same options give
// a bit-identical dataset.
void cmd_synth(const SynthOptions& opt);

// Full pipeline: load, optimize, rectify, fuse, export, and - when ground
// truth is present - evaluate. Writes into cfg.output_dir:
//   rectified/<stem>.pfm, trajectory.txt, intrinsics.json, cloud.ply,
//   loss_trace.csv, manifest.json, metrics.json (with GT poses),
//   dense_trajectory.txt (on request).
void cmd_reconstruct(const RunConfig& cfg);

// Recomputes metrics.json for an existing output directory against the
// ground truth stored with the input sequence.
MetricsReport cmd_eval(const std::string& input_dir, const std::string& output_dir);

// Prints one line per parameter group plus a verdict; returns 0 on pass.
int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out);

}  // namespace screcon
