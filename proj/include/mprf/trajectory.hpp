#pragma once

// Plain-text trajectory files: one `timestamp tx ty tz qx qy qz qw` record
// per line. Blank lines and lines starting with '#' are ignored.

#include "mprf/core.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mprf::core {

struct TimedPose {
  double timestamp = 0.0;
  PoseSE3 pose;
};

std::vector<TimedPose> read_trajectory(std::istream& in);
std::vector<TimedPose> read_trajectory_file(const std::string& path);

void write_trajectory(std::ostream& out, const std::vector<TimedPose>& poses);

/// Record closest in time to `timestamp`, or nullopt if none lies within
/// `max_dt` seconds. Expects records sorted by timestamp.
std::optional<TimedPose> lookup_pose(const std::vector<TimedPose>& trajectory,
                                     double timestamp, double max_dt);

}  // namespace mprf::core
