#include "mprf/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace mprf::core {

std::vector<TimedPose> read_trajectory(std::istream& in) {
  std::vector<TimedPose> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(fields >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw std::runtime_error("trajectory: malformed record on line " +
                               std::to_string(line_no));
    }
    const Eigen::Quaterniond q(qw, qx, qy, qz);
    if (!(std::abs(q.norm() - 1.0) < 1e-3)) {
      throw std::runtime_error("trajectory: quaternion on line " +
                               std::to_string(line_no) + " is not unit length");
    }
    out.push_back({t, PoseSE3::from_quaternion(q, {tx, ty, tz})});
  }
  return out;
}

std::vector<TimedPose> read_trajectory_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("trajectory: cannot open " + path);
  return read_trajectory(in);
}

void write_trajectory(std::ostream& out, const std::vector<TimedPose>& poses) {
  out << std::setprecision(17);
  for (const auto& tp : poses) {
    const Eigen::Quaterniond q(tp.pose.rotation);
    const auto& t = tp.pose.translation;
    out << tp.timestamp << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' '
        << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
}

std::optional<TimedPose> lookup_pose(const std::vector<TimedPose>& trajectory,
                                     double timestamp, double max_dt) {
  auto it = std::lower_bound(
      trajectory.begin(), trajectory.end(), timestamp,
      [](const TimedPose& tp, double t) { return tp.timestamp < t; });
  const TimedPose* best = nullptr;
  if (it != trajectory.end()) best = &*it;
  if (it != trajectory.begin()) {
    const TimedPose& prev = *std::prev(it);
    if (best == nullptr ||
        std::abs(prev.timestamp - timestamp) <= std::abs(best->timestamp - timestamp)) {
      best = &prev;
    }
  }
  if (best == nullptr || std::abs(best->timestamp - timestamp) > max_dt) return std::nullopt;
  return *best;
}

}  // namespace mprf::core
