#pragma once

// Synthetic recording with known ground truth: a trajectory that cycles
// through a handful of well-separated scenes, each a fixed set of landmarks
// carrying per-layer visual descriptors and a LiDAR descriptor.

#include "mprf/harness/config.hpp"
#include "mprf/harness/manifest.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mprf::harness {

struct SyntheticWorldSpec {
  int scenes = 5;
  int frames = 200;
  int frames_per_visit = 5;
  double dt_s = 2.0;
  double scene_spacing_m = 200.0;

  int landmarks_per_scene = 150;
  double depth_min_m = 2.5;
  double depth_max_m = 4.5;
  double half_extent_m = 0.6;  // lateral and vertical spread of landmarks

  double yaw_jitter_deg = 2.0;
  double xy_jitter_m = 0.15;
  double point_noise_m = 0.01;
  /// Norm of the per-frame perturbation added to a unit descriptor.
  double descriptor_noise = 0.1;

  int visual_dim = 32;
  int lidar_dim = 16;
  int layers = 3;
  fusion::PatchGrid grid;
  double focal_px = 800.0;
  int image_px = 224;
  std::uint64_t seed = 7;
};

struct SyntheticWorld {
  std::string manifest_path;
  Manifest manifest;
  std::vector<int> scene_of_frame;  // indexed like manifest.frames
};

/// Writes manifest.json, trajectory.txt (ground truth) and one patch-embedding
/// and one scan file per frame under `dir`. Output is a pure function of the spec.
SyntheticWorld generate_synthetic_world(const SyntheticWorldSpec& spec, const std::string& dir);

/// Pipeline settings sized for the synthetic world (small bank, short
/// exclusion window, single-threaded for reproducible timing).
PipelineConfig synthetic_world_config();

}  // namespace mprf::harness
