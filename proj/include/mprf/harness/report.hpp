#pragma once

// Report artefacts: markdown tables laid out like the published result
// tables, a flat metrics CSV, and the loop-closure / retrieval / frame CSVs
// that `mprf eval` reads back.

#include "mprf/harness/metrics.hpp"

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mprf::harness {

struct LoopClosure {
  FrameId query = 0;
  FrameId candidate = 0;
  double query_timestamp = 0.0;
  double candidate_timestamp = 0.0;
  PoseSE3 transform;  // query LiDAR frame → candidate LiDAR frame
  std::size_t inliers = 0;
  double inlier_rmse = 0.0;
  double retrieval_score = 0.0;
};

/// `| Model | < t0<unit> | ... |` header, separator and one row of percentages.
std::string markdown_threshold_table(const std::string& model, std::span<const double> thresholds,
                                     const std::string& unit, std::span<const double> percentages);

/// Retrieval, pose summary and the three threshold tables.
std::string render_markdown(const EvalReport& report, const std::string& model);
std::string render_metrics_csv(const EvalReport& report);

void write_loop_closures(std::ostream& out, std::span<const LoopClosure> closures);
std::vector<LoopClosure> read_loop_closures(std::istream& in);

void write_retrievals(std::ostream& out, std::span<const QueryRetrieval> retrievals,
                      const std::function<double(FrameId)>& timestamp_of);
std::vector<QueryRetrieval> read_retrievals(std::istream& in);

struct FrameStamp {
  FrameId id = 0;
  double timestamp = 0.0;
};
void write_frames(std::ostream& out, std::span<const FrameStamp> frames);
std::vector<FrameStamp> read_frames(std::istream& in);

void write_timings(std::ostream& out, const StageTimings& timings);
StageTimings read_timings(std::istream& in);

void write_exclusion(std::ostream& out, const ExclusionRule& rule);
ExclusionRule read_exclusion(std::istream& in);

/// "%.Nf" without locale surprises.
std::string format_fixed(double value, int decimals);

}  // namespace mprf::harness
