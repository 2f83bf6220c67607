#include "mprf/harness/report.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mprf::harness {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Yields the data rows of a CSV with a header line; checks the column count.
std::vector<std::vector<std::string>> csv_rows(std::istream& in, std::size_t columns,
                                               const char* what) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    auto cells = split_csv(line);
    if (cells.size() != columns) {
      throw std::runtime_error(std::string(what) + ": expected " + std::to_string(columns) +
                               " columns on line " + std::to_string(line_no));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

FrameId parse_id(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used);
  if (used != s.size()) throw std::runtime_error("bad frame id '" + s + "'");
  return v;
}

std::string format_threshold(double t) {
  if (t == std::floor(t)) return std::to_string(static_cast<long long>(t));
  std::ostringstream os;
  os << t;
  return os.str();
}

}  // namespace

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

std::string markdown_threshold_table(const std::string& model, std::span<const double> thresholds,
                                     const std::string& unit, std::span<const double> percentages) {
  if (thresholds.size() != percentages.size()) {
    throw std::invalid_argument("markdown_threshold_table: one percentage per threshold required");
  }
  std::ostringstream out;
  out << "| Model |";
  for (const double t : thresholds) out << " < " << format_threshold(t) << unit << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < thresholds.size(); ++i) out << "---|";
  out << "\n| " << model << " |";
  for (const double p : percentages) out << ' ' << format_fixed(p, 2) << " |";
  out << '\n';
  return out.str();
}

std::string render_markdown(const EvalReport& report, const std::string& model) {
  std::ostringstream out;
  const auto pct = [](double fraction) { return format_fixed(100.0 * fraction, 2); };
  const auto at = [&](int k) {
    const auto it = report.precision_at.find(k);
    return it == report.precision_at.end() ? 0.0 : it->second;
  };
  out << "## Retrieval: precision at top-k and mean query time (post-extraction)\n\n"
      << "| Model | Modality | Precision@1 | Precision@5 | Precision@10 | Time (ms) |\n"
      << "|---|---|---|---|---|---|\n"
      << "| " << model << " | V | " << pct(at(1)) << " | " << pct(at(5)) << " | " << pct(at(10))
      << " | " << format_fixed(report.timings.retrieval_ms, 2) << " |\n\n"
      << "Queries evaluated: " << report.queries_evaluated << "\n\n";

  out << "## Pose estimation: mean errors, poses estimated, time per query\n\n"
      << "| Model | Modality | Yaw Error (°) | DX Error (m) | DY Error (m) | Poses Estimated | Time (ms) |\n"
      << "|---|---|---|---|---|---|---|\n"
      << "| " << model << " | V-L | " << format_fixed(report.mean_yaw_err, 2) << " | "
      << format_fixed(report.mean_dx, 2) << " | " << format_fixed(report.mean_dy, 2) << " | "
      << report.poses_estimated << " | "
      << format_fixed(report.timings.matching_ms + report.timings.registration_ms, 2) << " |\n\n"
      << "Pose pairs evaluated: " << report.pose_pairs << "\n\n";

  out << "## Yaw error below thresholds (% of pose pairs)\n\n"
      << markdown_threshold_table(model, kYawThresholdsDeg, "°", report.yaw_table) << '\n'
      << "## Translation error in x below thresholds (% of pose pairs)\n\n"
      << markdown_threshold_table(model, kTranslationThresholdsM, "m", report.dx_table) << '\n'
      << "## Translation error in y below thresholds (% of pose pairs)\n\n"
      << markdown_threshold_table(model, kTranslationThresholdsM, "m", report.dy_table);
  return out.str();
}

std::string render_metrics_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "metric,value\n";
  for (const auto& [k, v] : report.precision_at) out << "precision_at_" << k << ',' << format_fixed(v, 6) << '\n';
  for (std::size_t i = 0; i < report.yaw_table.size(); ++i) {
    out << "yaw_below_" << format_threshold(kYawThresholdsDeg[i]) << "deg_pct," << format_fixed(report.yaw_table[i], 4) << '\n';
  }
  for (std::size_t i = 0; i < report.dx_table.size(); ++i) {
    out << "dx_below_" << format_threshold(kTranslationThresholdsM[i]) << "m_pct," << format_fixed(report.dx_table[i], 4) << '\n';
  }
  for (std::size_t i = 0; i < report.dy_table.size(); ++i) {
    out << "dy_below_" << format_threshold(kTranslationThresholdsM[i]) << "m_pct," << format_fixed(report.dy_table[i], 4) << '\n';
  }
  out << "mean_yaw_err_deg," << format_fixed(report.mean_yaw_err, 6) << '\n'
      << "mean_dx_m," << format_fixed(report.mean_dx, 6) << '\n'
      << "mean_dy_m," << format_fixed(report.mean_dy, 6) << '\n'
      << "poses_estimated," << report.poses_estimated << '\n'
      << "pose_pairs," << report.pose_pairs << '\n'
      << "queries_evaluated," << report.queries_evaluated << '\n'
      << "mean_query_time_ms," << format_fixed(report.mean_query_time_ms, 3) << '\n'
      << "retrieval_ms," << format_fixed(report.timings.retrieval_ms, 3) << '\n'
      << "matching_ms," << format_fixed(report.timings.matching_ms, 3) << '\n'
      << "registration_ms," << format_fixed(report.timings.registration_ms, 3) << '\n';
  return out.str();
}

void write_loop_closures(std::ostream& out, std::span<const LoopClosure> closures) {
  out << "query_id,candidate_id,query_timestamp_s,candidate_timestamp_s,inliers,inlier_rmse_m,"
         "retrieval_score,tx,ty,tz,qx,qy,qz,qw\n";
  for (const auto& c : closures) {
    Eigen::Quaterniond q(c.transform.rotation);
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const auto& t = c.transform.translation;
    out << c.query << ',' << c.candidate << ',' << format_fixed(c.query_timestamp, 6) << ','
        << format_fixed(c.candidate_timestamp, 6) << ',' << c.inliers << ','
        << format_fixed(c.inlier_rmse, 9) << ',' << format_fixed(c.retrieval_score, 9) << ','
        << format_fixed(t.x(), 9) << ',' << format_fixed(t.y(), 9) << ',' << format_fixed(t.z(), 9) << ','
        << format_fixed(q.x(), 12) << ',' << format_fixed(q.y(), 12) << ',' << format_fixed(q.z(), 12)
        << ',' << format_fixed(q.w(), 12) << '\n';
  }
}

std::vector<LoopClosure> read_loop_closures(std::istream& in) {
  std::vector<LoopClosure> out;
  for (const auto& r : csv_rows(in, 14, "loop_closures.csv")) {
    LoopClosure c;
    c.query = parse_id(r[0]);
    c.candidate = parse_id(r[1]);
    c.query_timestamp = parse_double(r[2]);
    c.candidate_timestamp = parse_double(r[3]);
    c.inliers = static_cast<std::size_t>(parse_id(r[4]));
    c.inlier_rmse = parse_double(r[5]);
    c.retrieval_score = parse_double(r[6]);
    const Eigen::Quaterniond q(parse_double(r[13]), parse_double(r[10]), parse_double(r[11]),
                               parse_double(r[12]));
    c.transform = PoseSE3::from_quaternion(q, {parse_double(r[7]), parse_double(r[8]), parse_double(r[9])});
    out.push_back(c);
  }
  return out;
}

void write_retrievals(std::ostream& out, std::span<const QueryRetrieval> retrievals,
                      const std::function<double(FrameId)>& timestamp_of) {
  out << "query_id,query_timestamp_s,rank,candidate_id,candidate_timestamp_s,score\n";
  for (const auto& q : retrievals) {
    for (std::size_t r = 0; r < q.shortlist.size(); ++r) {
      const auto& c = q.shortlist[r];
      out << q.query << ',' << format_fixed(q.timestamp, 6) << ',' << r + 1 << ',' << c.frame_id << ','
          << format_fixed(timestamp_of(c.frame_id), 6) << ',' << format_fixed(c.score, 9) << '\n';
    }
  }
}

std::vector<QueryRetrieval> read_retrievals(std::istream& in) {
  std::vector<QueryRetrieval> out;
  std::map<FrameId, std::size_t> slot;
  for (const auto& r : csv_rows(in, 6, "retrievals.csv")) {
    const FrameId q = parse_id(r[0]);
    auto [it, inserted] = slot.emplace(q, out.size());
    if (inserted) out.push_back({q, parse_double(r[1]), {}});
    out[it->second].shortlist.push_back({parse_id(r[3]), parse_double(r[5])});
  }
  return out;
}

void write_frames(std::ostream& out, std::span<const FrameStamp> frames) {
  out << "frame_id,timestamp_s\n";
  for (const auto& f : frames) out << f.id << ',' << format_fixed(f.timestamp, 6) << '\n';
}

std::vector<FrameStamp> read_frames(std::istream& in) {
  std::vector<FrameStamp> out;
  for (const auto& r : csv_rows(in, 2, "frames.csv")) out.push_back({parse_id(r[0]), parse_double(r[1])});
  return out;
}

void write_timings(std::ostream& out, const StageTimings& t) {
  out << "stage,mean_ms\n"
      << "retrieval," << format_fixed(t.retrieval_ms, 6) << '\n'
      << "matching," << format_fixed(t.matching_ms, 6) << '\n'
      << "registration," << format_fixed(t.registration_ms, 6) << '\n'
      << "total," << format_fixed(t.total_ms, 6) << '\n';
}

StageTimings read_timings(std::istream& in) {
  StageTimings t;
  for (const auto& r : csv_rows(in, 2, "timings.csv")) {
    const double v = parse_double(r[1]);
    if (r[0] == "retrieval") t.retrieval_ms = v;
    else if (r[0] == "matching") t.matching_ms = v;
    else if (r[0] == "registration") t.registration_ms = v;
    else if (r[0] == "total") t.total_ms = v;
  }
  return t;
}

void write_exclusion(std::ostream& out, const ExclusionRule& rule) {
  out << "key,value\n"
      << "exclusion_window_s," << format_fixed(rule.window_s, 6) << '\n'
      << "past_only," << (rule.past_only ? "true" : "false") << '\n';
}

ExclusionRule read_exclusion(std::istream& in) {
  ExclusionRule rule;
  for (const auto& r : csv_rows(in, 2, "exclusion.csv")) {
    if (r[0] == "exclusion_window_s") rule.window_s = parse_double(r[1]);
    else if (r[0] == "past_only") rule.past_only = r[1] == "true";
  }
  return rule;
}

}  // namespace mprf::harness
