#pragma once

// JSON manifest describing a recording:
//
//   {
//     "calibration": {"fx": .., "fy": .., "cx": .., "cy": .., "width": .., "height": ..,
//                     "cam_from_lidar": {"translation": [x, y, z],
//                                        "quaternion": [qx, qy, qz, qw]}},
//     "frames": [{"id": 0, "timestamp_s": 0.0, "patch_file": "...", "scan_file": "...",
//                 "pose": {"translation": [..], "quaternion": [..]}}, ...]
//   }
//
// A pose may instead be given as {"matrix": [[4×4 row-major]]}. Relative file
// paths resolve against the manifest's directory. Frame poses are
// world_from_lidar.

#include "mprf/core.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mprf::harness {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FrameEntry {
  core::FrameId id = 0;
  double timestamp_s = 0.0;
  std::string patch_file;
  std::string scan_file;
  std::optional<core::PoseSE3> pose;
};

struct Manifest {
  core::CameraIntrinsics calibration;
  std::vector<FrameEntry> frames;  // sorted by timestamp
  std::string base_dir;

  [[nodiscard]] bool has_poses() const;
};

/// Throws ManifestError on malformed JSON, missing fields, invalid
/// calibration or duplicate frame ids.
Manifest parse_manifest(const std::string& json_text, const std::string& base_dir);
Manifest load_manifest(const std::string& path);

std::string pose_to_json(const core::PoseSE3& pose);

}  // namespace mprf::harness
