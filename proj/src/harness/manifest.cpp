#include "mprf/harness/manifest.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

namespace mprf::harness {

namespace {

using nlohmann::json;

Eigen::Vector3d vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ManifestError(std::string(what) + " must be a 3-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

core::PoseSE3 parse_pose(const json& j, const std::string& what) {
  if (j.contains("matrix")) {
    const auto& m = j.at("matrix");
    if (!m.is_array() || m.size() < 3) throw ManifestError(what + ".matrix must be 4×4");
    core::PoseSE3 pose;
    for (int r = 0; r < 3; ++r) {
      const auto& row = m.at(static_cast<std::size_t>(r));
      if (!row.is_array() || row.size() != 4) throw ManifestError(what + ".matrix must be 4×4");
      for (int c = 0; c < 3; ++c) pose.rotation(r, c) = row[static_cast<std::size_t>(c)].get<double>();
      pose.translation(r) = row[3].get<double>();
    }
    if (!pose.is_valid(1e-6)) throw ManifestError(what + ".matrix is not a rigid transform");
    return pose;
  }
  const Eigen::Vector3d t = vec3(j.at("translation"), "translation");
  const auto& q = j.at("quaternion");
  if (!q.is_array() || q.size() != 4) throw ManifestError(what + ".quaternion must be [qx, qy, qz, qw]");
  const Eigen::Quaterniond quat(q[3].get<double>(), q[0].get<double>(), q[1].get<double>(),
                                q[2].get<double>());
  if (!(std::abs(quat.norm() - 1.0) < 1e-3)) throw ManifestError(what + ".quaternion is not unit length");
  return core::PoseSE3::from_quaternion(quat, t);
}

std::string resolve(const std::string& base, const std::string& file) {
  const std::filesystem::path p(file);
  if (p.is_absolute() || base.empty()) return p.string();
  return (std::filesystem::path(base) / p).string();
}

}  // namespace

bool Manifest::has_poses() const {
  return !frames.empty() &&
         std::all_of(frames.begin(), frames.end(), [](const FrameEntry& f) { return f.pose.has_value(); });
}

Manifest parse_manifest(const std::string& json_text, const std::string& base_dir) {
  Manifest m;
  m.base_dir = base_dir;
  try {
    const json root = json::parse(json_text);
    const auto& cal = root.at("calibration");
    m.calibration.fx = cal.at("fx").get<double>();
    m.calibration.fy = cal.at("fy").get<double>();
    m.calibration.cx = cal.at("cx").get<double>();
    m.calibration.cy = cal.at("cy").get<double>();
    m.calibration.width = cal.at("width").get<int>();
    m.calibration.height = cal.at("height").get<int>();
    m.calibration.cam_from_lidar = parse_pose(cal.at("cam_from_lidar"), "calibration.cam_from_lidar");
    m.calibration.validate();

    std::unordered_set<core::FrameId> seen;
    for (const auto& f : root.at("frames")) {
      FrameEntry e;
      e.id = f.at("id").get<core::FrameId>();
      e.timestamp_s = f.at("timestamp_s").get<double>();
      e.patch_file = resolve(base_dir, f.at("patch_file").get<std::string>());
      e.scan_file = resolve(base_dir, f.at("scan_file").get<std::string>());
      if (f.contains("pose") && !f.at("pose").is_null()) {
        e.pose = parse_pose(f.at("pose"), "frame " + std::to_string(e.id) + " pose");
      }
      if (!seen.insert(e.id).second) throw ManifestError("duplicate frame id " + std::to_string(e.id));
      m.frames.push_back(std::move(e));
    }
  } catch (const ManifestError&) {
    throw;
  } catch (const std::exception& e) {
    throw ManifestError(std::string("manifest: ") + e.what());
  }
  std::stable_sort(m.frames.begin(), m.frames.end(),
                   [](const FrameEntry& a, const FrameEntry& b) { return a.timestamp_s < b.timestamp_s; });
  return m;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str(), std::filesystem::path(path).parent_path().string());
}

std::string pose_to_json(const core::PoseSE3& pose) {
  Eigen::Quaterniond q(pose.rotation);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const json j = {{"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}},
                  {"quaternion", {q.x(), q.y(), q.z(), q.w()}}};
  return j.dump();
}

}  // namespace mprf::harness
