#include "mprf/harness/triplets.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace mprf::harness {

void TripletSpec::validate() const {
  if (!(pos_overlap_min > neg_overlap_max)) {
    throw std::invalid_argument("triplets: pos_overlap_min must exceed neg_overlap_max");
  }
  if (!(min_dt_ms >= 0.0)) throw std::invalid_argument("triplets: min_dt_ms must be >= 0");
}

std::vector<Triplet> mine_triplets(std::span<const FrameId> ids, std::span<const PoseSE3> poses,
                                   std::span<const double> timestamps, const OverlapParams& overlap,
                                   const TripletSpec& spec, std::size_t count, std::uint64_t seed) {
  spec.validate();
  overlap.validate();
  if (ids.size() != poses.size() || ids.size() != timestamps.size()) {
    throw std::invalid_argument("mine_triplets: ids, poses and timestamps differ in length");
  }
  const std::size_t n = ids.size();
  const double min_dt_s = spec.min_dt_ms / 1000.0;

  std::vector<std::vector<std::size_t>> positives(n), negatives(n);
  std::vector<double> weight(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t o = 0; o < n; ++o) {
      if (o == a || std::abs(timestamps[a] - timestamps[o]) < min_dt_s) continue;
      const double ov = compute_overlap(poses[a], poses[o], overlap);
      if (ov > spec.pos_overlap_min) positives[a].push_back(o);
      if (ov < spec.neg_overlap_max) negatives[a].push_back(o);
    }
    weight[a] = static_cast<double>(positives[a].size()) * static_cast<double>(negatives[a].size());
  }
  double total = 0.0;
  for (const double w : weight) total += w;
  if (total == 0.0) throw std::runtime_error("mine_triplets: no valid triplet exists");

  // Anchor ∝ |positives|·|negatives|, then uniform positive and negative:
  // every valid triplet is equally likely.
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick_anchor(weight.begin(), weight.end());
  std::vector<Triplet> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t a = pick_anchor(rng);
    std::uniform_int_distribution<std::size_t> pick_pos(0, positives[a].size() - 1);
    std::uniform_int_distribution<std::size_t> pick_neg(0, negatives[a].size() - 1);
    const std::size_t p = positives[a][pick_pos(rng)];
    const std::size_t q = negatives[a][pick_neg(rng)];
    out.push_back({ids[a], ids[p], ids[q]});
  }
  return out;
}

}  // namespace mprf::harness
