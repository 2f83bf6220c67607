#pragma once

// Co-visibility ground truth between two poses: an angular term (yaw
// difference inside the horizontal field of view) times a positional term
// that decays with forward and lateral displacement.

#include "mprf/core.hpp"

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace mprf::harness {

using core::FrameId;
using core::PoseSE3;

struct OverlapParams {
  double fov_h_deg = 90.0;
  double lat_max_m = 10.0;
  double fwd_max_m = 20.0;
  double tau_o = 0.6;

  void validate() const;
};

/// Overlap in [0, 1]. Displacements are read in the frame of `pose_a`
/// (x forward, y lateral).
double compute_overlap(const PoseSE3& pose_a, const PoseSE3& pose_b, const OverlapParams& params);

/// Symmetric boolean n × n matrix.
class MatchMatrix {
 public:
  explicit MatchMatrix(std::size_t n = 0) : n_(n), cells_(n * n, 0) {}

  [[nodiscard]] std::size_t size() const { return n_; }
  [[nodiscard]] bool operator()(std::size_t i, std::size_t j) const { return cells_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool value) {
    cells_[i * n_ + j] = value ? 1 : 0;
    cells_[j * n_ + i] = value ? 1 : 0;
  }

 private:
  std::size_t n_;
  std::vector<std::uint8_t> cells_;
};

/// Entry (i, j) is overlap(pose_min(i,j), pose_max(i,j)) > tau_o: the earlier
/// index is always the reference frame, which makes the matrix symmetric.
/// Pass poses in temporal order.
MatchMatrix label_pairs(std::span<const PoseSE3> poses, const OverlapParams& params);

/// Match labels addressed by frame id.
class GroundTruth {
 public:
  GroundTruth(std::vector<FrameId> ids, MatchMatrix matches);

  /// Throws std::out_of_range for an unknown id.
  [[nodiscard]] bool is_match(FrameId a, FrameId b) const;
  [[nodiscard]] bool contains(FrameId id) const { return row_of_.contains(id); }
  [[nodiscard]] const std::vector<FrameId>& ids() const { return ids_; }

 private:
  std::vector<FrameId> ids_;
  MatchMatrix matches_;
  std::unordered_map<FrameId, std::size_t> row_of_;
};

}  // namespace mprf::harness
