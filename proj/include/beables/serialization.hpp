#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "beables/dynamics.hpp"
#include "beables/estimators.hpp"

namespace beables::io {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest round-trip decimal form ("%.17g").
std::string fmt(double x);

/// Writes to `path.tmp` and renames over `path`; no partial file ever
/// appears at the final path.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Record table: a "# {json}" header line, a column row, one row per record:
/// record,step,time,kinetic,potential,com_<a>...,lambda_<a>_<i>...
std::string trajectory_csv(const TrajectoryRecord& rec, const nlohmann::json& header);

/// Tracked particle positions: "# {json}" line, then
/// record,time,particle,residual,x_<a>...
std::string frames_csv(const EigenTrajectory& traj, const nlohmann::json& header);

struct FramesFile {
  nlohmann::json header;
  EigenTrajectory trajectory;
};
FramesFile parse_frames_csv(const std::string& text);

/// Scaling table with a fixed column order (see scaling_columns()).
std::string scaling_csv(const std::vector<ScalingPoint>& points, const nlohmann::json& conventions);
const std::vector<std::string>& scaling_columns();

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};
/// Plain CSV reader (no quoting); lines starting with '#' are skipped.
CsvTable parse_csv(const std::string& text);

}  // namespace beables::io
