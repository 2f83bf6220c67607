#include "mprf/harness/synthetic.hpp"

#include "mprf/fusion.hpp"
#include "mprf/trajectory.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

namespace mprf::harness {

namespace {

using Rng = std::mt19937_64;

Eigen::VectorXd random_unit(Rng& rng, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = n(rng);
  return v.normalized();
}

Eigen::VectorXd perturb(const Eigen::VectorXd& v, double noise, Rng& rng) {
  return v + noise * random_unit(rng, static_cast<int>(v.size()));
}

struct Scene {
  core::PoseSE3 base;                             // world_from_lidar of the nominal viewpoint
  std::vector<Eigen::Vector3d> landmarks;         // base LiDAR frame
  std::vector<std::vector<Eigen::VectorXd>> vis;  // [layer][landmark]
  std::vector<Eigen::VectorXd> lidar;
  std::vector<Eigen::VectorXd> background;        // per layer
};

nlohmann::json pose_json(const core::PoseSE3& p) {
  Eigen::Quaterniond q(p.rotation);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return {{"translation", {p.translation.x(), p.translation.y(), p.translation.z()}},
          {"quaternion", {q.x(), q.y(), q.z(), q.w()}}};
}

core::CameraIntrinsics camera(const SyntheticWorldSpec& spec) {
  core::CameraIntrinsics intr;
  intr.fx = intr.fy = spec.focal_px;
  intr.cx = intr.cy = spec.image_px / 2.0;
  intr.width = intr.height = spec.image_px;
  // Camera looks along LiDAR +x: x_cam = -y, y_cam = -z, z_cam = x.
  intr.cam_from_lidar.rotation << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  return intr;
}

}  // namespace

SyntheticWorld generate_synthetic_world(const SyntheticWorldSpec& spec, const std::string& dir) {
  if (spec.scenes < 1 || spec.frames < 1 || spec.frames_per_visit < 1 || spec.layers < 3) {
    throw std::invalid_argument("synthetic world: bad spec");
  }
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "patches");
  fs::create_directories(fs::path(dir) / "scans");

  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> depth(spec.depth_min_m, spec.depth_max_m);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Scene> scenes(static_cast<std::size_t>(spec.scenes));
  for (int s = 0; s < spec.scenes; ++s) {
    auto& sc = scenes[static_cast<std::size_t>(s)];
    sc.base.rotation = core::rot_z(72.0 * s + 15.0);
    sc.base.translation = {spec.scene_spacing_m * s, 0.25 * spec.scene_spacing_m * (s % 2), 0.0};
    sc.vis.resize(static_cast<std::size_t>(spec.layers));
    for (int l = 0; l < spec.landmarks_per_scene; ++l) {
      sc.landmarks.emplace_back(depth(rng), spec.half_extent_m * unit(rng), spec.half_extent_m * unit(rng));
      for (auto& layer : sc.vis) layer.push_back(random_unit(rng, spec.visual_dim));
      sc.lidar.push_back(random_unit(rng, spec.lidar_dim));
    }
    for (int l = 0; l < spec.layers; ++l) sc.background.push_back(random_unit(rng, spec.visual_dim));
  }

  const auto intr = camera(spec);
  const auto& grid = spec.grid;
  const double patch_w = static_cast<double>(intr.width) / grid.cols;
  const double patch_h = static_cast<double>(intr.height) / grid.rows;

  SyntheticWorld world;
  world.manifest_path = (fs::path(dir) / "manifest.json").string();
  nlohmann::json frames = nlohmann::json::array();
  std::vector<core::TimedPose> trajectory;
  for (int i = 0; i < spec.frames; ++i) {
    const int s = (i / spec.frames_per_visit) % spec.scenes;
    const auto& sc = scenes[static_cast<std::size_t>(s)];
    core::PoseSE3 jitter;
    jitter.rotation = core::rot_z(spec.yaw_jitter_deg * unit(rng));
    jitter.translation = {spec.xy_jitter_m * unit(rng), spec.xy_jitter_m * unit(rng), 0.0};
    const core::PoseSE3 pose = sc.base * jitter;
    const core::PoseSE3 frame_from_base = jitter.inverse();

    fusion::LidarScan scan;
    scan.points.resize(static_cast<Eigen::Index>(sc.landmarks.size()), 3);
    scan.descriptors.resize(static_cast<Eigen::Index>(sc.landmarks.size()), spec.lidar_dim);
    for (std::size_t l = 0; l < sc.landmarks.size(); ++l) {
      const Eigen::Vector3d noise(gauss(rng), gauss(rng), gauss(rng));
      const auto r = static_cast<Eigen::Index>(l);
      scan.points.row(r) = (frame_from_base.apply(sc.landmarks[l]) + spec.point_noise_m * noise).transpose();
      scan.descriptors.row(r) = perturb(sc.lidar[l], spec.descriptor_noise, rng).transpose();
    }

    // The landmark whose projection lies nearest each patch centre, as the
    // lifting step will see it.
    std::vector<int> owner(static_cast<std::size_t>(grid.size()), -1);
    std::vector<double> best(static_cast<std::size_t>(grid.size()), 0.0);
    for (Eigen::Index r = 0; r < scan.points.rows(); ++r) {
      const auto proj = core::project_to_image(intr.cam_from_lidar.apply(scan.points.row(r).transpose()), intr);
      if (!proj.valid()) continue;
      const int col = std::min(grid.cols - 1, static_cast<int>(proj.u / patch_w));
      const int row = std::min(grid.rows - 1, static_cast<int>(proj.v / patch_h));
      const auto p = static_cast<std::size_t>(row * grid.cols + col);
      const double du = proj.u - (col + 0.5) * patch_w;
      const double dv = proj.v - (row + 0.5) * patch_h;
      const double d2 = du * du + dv * dv;
      if (owner[p] < 0 || d2 < best[p]) {
        owner[p] = static_cast<int>(r);
        best[p] = d2;
      }
    }

    fusion::PatchLayers layers(static_cast<std::size_t>(spec.layers),
                               Eigen::MatrixXd(grid.size(), spec.visual_dim));
    for (int p = 0; p < grid.size(); ++p) {
      const int lm = owner[static_cast<std::size_t>(p)];
      for (int l = 0; l < spec.layers; ++l) {
        const auto& clean = lm >= 0 ? sc.vis[static_cast<std::size_t>(l)][static_cast<std::size_t>(lm)]
                                    : sc.background[static_cast<std::size_t>(l)];
        layers[static_cast<std::size_t>(l)].row(p) = perturb(clean, spec.descriptor_noise, rng).transpose();
      }
    }

    const std::string stem = std::to_string(i);
    fusion::save_patch_embeddings((fs::path(dir) / "patches" / (stem + ".bin")).string(), layers);
    fusion::save_lidar_scan((fs::path(dir) / "scans" / (stem + ".bin")).string(), scan);
    frames.push_back({{"id", i},
                      {"timestamp_s", i * spec.dt_s},
                      {"patch_file", "patches/" + stem + ".bin"},
                      {"scan_file", "scans/" + stem + ".bin"},
                      {"pose", pose_json(pose)}});
    trajectory.push_back({i * spec.dt_s, pose});
    world.scene_of_frame.push_back(s);
  }

  const nlohmann::json root = {{"calibration",
                                {{"fx", intr.fx},
                                 {"fy", intr.fy},
                                 {"cx", intr.cx},
                                 {"cy", intr.cy},
                                 {"width", intr.width},
                                 {"height", intr.height},
                                 {"cam_from_lidar", pose_json(intr.cam_from_lidar)}}},
                               {"frames", frames}};
  {
    std::ofstream out(world.manifest_path);
    if (!out) throw std::runtime_error("cannot write " + world.manifest_path);
    out << root.dump(2) << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "trajectory.txt");
    if (!out) throw std::runtime_error("cannot write trajectory.txt under " + dir);
    core::write_trajectory(out, trajectory);
  }
  world.manifest = load_manifest(world.manifest_path);
  return world;
}

PipelineConfig synthetic_world_config() {
  PipelineConfig cfg;
  cfg.aggregation.clusters = 8;
  cfg.aggregation.projected_dim = 16;
  cfg.aggregation.fit_seed = 11;
  cfg.retrieval.exclusion_window_s = 10.0;
  cfg.pose.ransac.rng_seed = 5;
  cfg.run.threads = 1;
  return cfg;
}

}  // namespace mprf::harness
