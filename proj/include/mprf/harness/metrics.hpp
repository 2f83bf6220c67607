#pragma once

#include "mprf/harness/overlap.hpp"
#include "mprf/retrieval.hpp"

#include <array>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace mprf::harness {

struct QueryRetrieval {
  FrameId query = 0;
  double timestamp = 0.0;
  retrieval::Shortlist shortlist;
};

/// Mean over queries of the true-match fraction among the top min(k, n)
/// returned candidates. Throws std::invalid_argument on no queries, k < 1 or
/// a query with an empty shortlist.
double precision_at_k(std::span<const QueryRetrieval> retrievals, const GroundTruth& gt, int k);

/// Percentage of `errors` strictly below each threshold. A nullopt entry is a
/// failed estimate and never passes. Thresholds must be strictly increasing.
std::vector<double> threshold_table(std::span<const std::optional<double>> errors,
                                    std::span<const double> thresholds);

/// Which database frames a query may retrieve.
struct ExclusionRule {
  double window_s = 30.0;
  /// Only frames older than the window are eligible (online loop closure).
  bool past_only = true;

  [[nodiscard]] bool excludes(double query_ts, double candidate_ts) const;
};

/// Mean wall-clock per query, milliseconds, measured after feature extraction.
struct StageTimings {
  double retrieval_ms = 0.0;
  double matching_ms = 0.0;
  double registration_ms = 0.0;
  double total_ms = 0.0;
};

inline constexpr std::array<int, 3> kPrecisionKs{1, 5, 10};
inline constexpr std::array<double, 4> kYawThresholdsDeg{2.0, 3.0, 5.0, 10.0};
inline constexpr std::array<double, 5> kTranslationThresholdsM{1.0, 2.0, 3.0, 5.0, 10.0};

struct EvalReport {
  std::map<int, double> precision_at;  // k → fraction in [0, 1]
  std::vector<double> yaw_table;       // percentages per kYawThresholdsDeg
  std::vector<double> dx_table;        // percentages per kTranslationThresholdsM
  std::vector<double> dy_table;
  double mean_yaw_err = 0.0;
  double mean_dx = 0.0;
  double mean_dy = 0.0;
  std::size_t poses_estimated = 0;
  std::size_t pose_pairs = 0;
  std::size_t queries_evaluated = 0;
  double mean_query_time_ms = 0.0;
  StageTimings timings;
};

struct EvalFrame {
  FrameId id = 0;
  double timestamp = 0.0;
  PoseSE3 pose;
};

struct EvalClosure {
  FrameId query = 0;
  FrameId candidate = 0;
  PoseSE3 transform;  // maps query-frame points into the candidate frame
};

/// Scores retrievals and closures against ground-truth poses.
///
/// Precision is averaged over queries that have a non-empty shortlist and at
/// least one true match among the frames the exclusion rule leaves eligible.
/// Pose tables cover those queries plus any query with an accepted closure; a
/// query without a closure counts as a failure.
EvalReport evaluate(std::span<const EvalFrame> frames, std::span<const QueryRetrieval> retrievals,
                    std::span<const EvalClosure> closures, const OverlapParams& overlap,
                    const ExclusionRule& exclusion, const StageTimings& timings = {});

}  // namespace mprf::harness
