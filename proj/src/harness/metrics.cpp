#include "mprf/harness/metrics.hpp"

#include "mprf/pose_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace mprf::harness {

double precision_at_k(std::span<const QueryRetrieval> retrievals, const GroundTruth& gt, int k) {
  if (retrievals.empty()) throw std::invalid_argument("precision_at_k: no queries");
  if (k < 1) throw std::invalid_argument("precision_at_k: k must be >= 1");
  double sum = 0.0;
  for (const auto& q : retrievals) {
    if (q.shortlist.empty()) {
      throw std::invalid_argument("precision_at_k: query " + std::to_string(q.query) +
                                  " has no candidates");
    }
    const std::size_t n = std::min(q.shortlist.size(), static_cast<std::size_t>(k));
    std::size_t hits = 0;
    for (std::size_t r = 0; r < n; ++r) hits += gt.is_match(q.query, q.shortlist[r].frame_id) ? 1 : 0;
    sum += static_cast<double>(hits) / static_cast<double>(n);
  }
  return sum / static_cast<double>(retrievals.size());
}

std::vector<double> threshold_table(std::span<const std::optional<double>> errors,
                                    std::span<const double> thresholds) {
  if (errors.empty()) throw std::invalid_argument("threshold_table: empty error list");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > thresholds[i - 1])) {
      throw std::invalid_argument("threshold_table: thresholds must be strictly increasing");
    }
  }
  std::vector<double> out;
  out.reserve(thresholds.size());
  for (const double t : thresholds) {
    const auto passed = std::count_if(errors.begin(), errors.end(),
                                      [t](const std::optional<double>& e) { return e && *e < t; });
    out.push_back(100.0 * static_cast<double>(passed) / static_cast<double>(errors.size()));
  }
  return out;
}

bool ExclusionRule::excludes(double query_ts, double candidate_ts) const {
  if (past_only) return candidate_ts > query_ts - window_s;
  return std::abs(candidate_ts - query_ts) < window_s;
}

EvalReport evaluate(std::span<const EvalFrame> frames, std::span<const QueryRetrieval> retrievals,
                    std::span<const EvalClosure> closures, const OverlapParams& overlap,
                    const ExclusionRule& exclusion, const StageTimings& timings) {
  overlap.validate();
  std::vector<EvalFrame> ordered(frames.begin(), frames.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const EvalFrame& a, const EvalFrame& b) { return a.timestamp < b.timestamp; });
  std::vector<FrameId> ids;
  std::vector<PoseSE3> poses;
  std::unordered_map<FrameId, std::size_t> row_of;
  for (const auto& f : ordered) {
    row_of.emplace(f.id, ids.size());
    ids.push_back(f.id);
    poses.push_back(f.pose);
  }
  const GroundTruth gt(ids, label_pairs(poses, overlap));

  std::unordered_map<FrameId, const EvalClosure*> closure_of;
  for (const auto& c : closures) closure_of.emplace(c.query, &c);

  EvalReport report;
  report.timings = timings;
  report.mean_query_time_ms = timings.total_ms;

  std::vector<QueryRetrieval> evaluated;
  std::vector<FrameId> pose_queries;
  for (const auto& q : retrievals) {
    if (!row_of.contains(q.query)) continue;
    bool has_positive = false;
    for (const auto& f : ordered) {
      if (f.id == q.query || exclusion.excludes(q.timestamp, f.timestamp)) continue;
      if (gt.is_match(q.query, f.id)) {
        has_positive = true;
        break;
      }
    }
    if (has_positive && !q.shortlist.empty()) evaluated.push_back(q);
    if ((has_positive && !q.shortlist.empty()) || closure_of.contains(q.query)) {
      pose_queries.push_back(q.query);
    }
  }
  report.queries_evaluated = evaluated.size();
  for (const int k : kPrecisionKs) {
    report.precision_at[k] = evaluated.empty() ? 0.0 : precision_at_k(evaluated, gt, k);
  }

  std::vector<std::optional<double>> yaw, dx, dy;
  double sum_yaw = 0.0, sum_dx = 0.0, sum_dy = 0.0;
  for (const FrameId q : pose_queries) {
    const auto it = closure_of.find(q);
    if (it == closure_of.end() || !row_of.contains(it->second->candidate)) {
      yaw.emplace_back();
      dx.emplace_back();
      dy.emplace_back();
      continue;
    }
    const auto& c = *it->second;
    const PoseSE3 truth =
        core::se3_relative(poses[row_of.at(c.candidate)], poses[row_of.at(c.query)]);
    const auto err = pose::pose_errors(c.transform, truth);
    yaw.emplace_back(err.yaw_deg);
    dx.emplace_back(err.dx_m);
    dy.emplace_back(err.dy_m);
    sum_yaw += err.yaw_deg;
    sum_dx += err.dx_m;
    sum_dy += err.dy_m;
    ++report.poses_estimated;
  }
  report.pose_pairs = pose_queries.size();
  if (report.poses_estimated > 0) {
    const auto n = static_cast<double>(report.poses_estimated);
    report.mean_yaw_err = sum_yaw / n;
    report.mean_dx = sum_dx / n;
    report.mean_dy = sum_dy / n;
  }
  if (!pose_queries.empty()) {
    report.yaw_table = threshold_table(yaw, kYawThresholdsDeg);
    report.dx_table = threshold_table(dx, kTranslationThresholdsM);
    report.dy_table = threshold_table(dy, kTranslationThresholdsM);
  } else {
    report.yaw_table.assign(kYawThresholdsDeg.size(), 0.0);
    report.dx_table.assign(kTranslationThresholdsM.size(), 0.0);
    report.dy_table.assign(kTranslationThresholdsM.size(), 0.0);
  }
  return report;
}

}  // namespace mprf::harness
