#pragma once

#include "mprf/harness/overlap.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mprf::harness {

struct TripletSpec {
  double pos_overlap_min = 0.7;
  double neg_overlap_max = 0.1;
  double min_dt_ms = 100.0;

  void validate() const;
};

struct Triplet {
  FrameId anchor = 0;
  FrameId positive = 0;
  FrameId negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Draws `count` triplets uniformly (with replacement) from every valid
/// (anchor, positive, negative): overlap(anchor, positive) > pos_overlap_min,
/// overlap(anchor, negative) < neg_overlap_max, both at least min_dt_ms away
/// from the anchor in time. Overlap is measured in the anchor's frame.
///
/// Throws std::runtime_error when no valid triplet exists.
std::vector<Triplet> mine_triplets(std::span<const FrameId> ids, std::span<const PoseSE3> poses,
                                   std::span<const double> timestamps, const OverlapParams& overlap,
                                   const TripletSpec& spec, std::size_t count, std::uint64_t seed);

}  // namespace mprf::harness
