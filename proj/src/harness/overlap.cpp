#include "mprf/harness/overlap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mprf::harness {

void OverlapParams::validate() const {
  if (!(fov_h_deg > 0.0)) throw std::invalid_argument("overlap: fov_h_deg must be > 0");
  if (!(lat_max_m > 0.0) || !(fwd_max_m > 0.0)) {
    throw std::invalid_argument("overlap: displacement scales must be > 0");
  }
  if (!(tau_o > 0.0 && tau_o < 1.0)) throw std::invalid_argument("overlap: tau_o must lie in (0, 1)");
}

double compute_overlap(const PoseSE3& pose_a, const PoseSE3& pose_b, const OverlapParams& params) {
  const PoseSE3 delta = core::se3_relative(pose_a, pose_b);
  const double yaw = std::abs(core::yaw_from_rotation(delta.rotation));
  const double angular = std::clamp(1.0 - yaw / params.fov_h_deg, 0.0, 1.0);
  const double fwd = std::abs(delta.translation.x());
  const double lat = std::abs(delta.translation.y());
  const double positional = std::clamp(1.0 - lat / params.lat_max_m, 0.0, 1.0) *
                            std::clamp(1.0 - fwd / params.fwd_max_m, 0.0, 1.0);
  return angular * positional;
}

MatchMatrix label_pairs(std::span<const PoseSE3> poses, const OverlapParams& params) {
  params.validate();
  MatchMatrix m(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    m.set(i, i, true);
    for (std::size_t j = i + 1; j < poses.size(); ++j) {
      m.set(i, j, compute_overlap(poses[i], poses[j], params) > params.tau_o);
    }
  }
  return m;
}

GroundTruth::GroundTruth(std::vector<FrameId> ids, MatchMatrix matches)
    : ids_(std::move(ids)), matches_(std::move(matches)) {
  if (ids_.size() != matches_.size()) throw std::invalid_argument("ground truth: size mismatch");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!row_of_.emplace(ids_[i], i).second) {
      throw std::invalid_argument("ground truth: duplicate frame id " + std::to_string(ids_[i]));
    }
  }
}

bool GroundTruth::is_match(FrameId a, FrameId b) const {
  return matches_(row_of_.at(a), row_of_.at(b));
}

}  // namespace mprf::harness
