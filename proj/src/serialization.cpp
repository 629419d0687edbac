#include "beables/serialization.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace beables::io {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trajectory_csv(const TrajectoryRecord& rec, const nlohmann::json& header) {
  std::ostringstream os;
  os << "# " << header.dump() << '\n';
  const std::size_t d = rec.spectra.empty() ? 0 : rec.spectra.front().lambda.size();
  const std::size_t n = d == 0 ? 0 : rec.spectra.front().lambda.front().size();
  os << "record,step,time,kinetic,potential";
  for (std::size_t a = 0; a < d; ++a) os << ",com_" << a;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t i = 0; i < n; ++i) os << ",lambda_" << a << '_' << i;
  os << '\n';
  for (std::size_t r = 0; r < rec.size(); ++r) {
    os << r << ',' << rec.steps[r] << ',' << fmt(rec.times[r]) << ',' << fmt(rec.energies[r].kinetic)
       << ',' << fmt(rec.energies[r].potential);
    for (double p : rec.com_momenta[r]) os << ',' << fmt(p);
    for (const auto& dir : rec.spectra[r].lambda)
      for (double l : dir) os << ',' << fmt(l);
    os << '\n';
  }
  return os.str();
}

std::string frames_csv(const EigenTrajectory& traj, const nlohmann::json& header) {
  std::ostringstream os;
  os << "# " << header.dump() << '\n';
  const int d = traj.dims();
  os << "record,time,particle,residual";
  for (int a = 0; a < d; ++a) os << ",x_" << a;
  os << '\n';
  for (std::size_t f = 0; f < traj.frames(); ++f)
    for (int i = 0; i < traj.particles(); ++i) {
      os << f << ',' << fmt(traj.times[f]) << ',' << i << ','
         << fmt(traj.residuals.empty() ? 0.0 : traj.residuals[f]);
      for (int a = 0; a < d; ++a) os << ',' << fmt(traj.positions[f][i](a));
      os << '\n';
    }
  return os.str();
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!have_header) {
      t.columns = split(line);
      have_header = true;
    } else {
      auto row = split(line);
      if (row.size() != t.columns.size()) throw IoError("CSV row has " + std::to_string(row.size()) +
                                                        " cells, expected " + std::to_string(t.columns.size()));
      t.rows.push_back(std::move(row));
    }
  }
  if (!have_header) throw IoError("CSV has no header row");
  return t;
}

FramesFile parse_frames_csv(const std::string& text) {
  FramesFile ff;
  if (text.rfind("# ", 0) == 0) {
    const auto eol = text.find('\n');
    try {
      ff.header = nlohmann::json::parse(text.substr(2, eol - 2));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("frames header is not JSON: ") + e.what());
    }
  }
  const auto table = parse_csv(text);
  if (table.columns.size() < 5 || table.columns[0] != "record" || table.columns[2] != "particle")
    throw IoError("not a frames table");
  const int d = static_cast<int>(table.columns.size()) - 4;
  std::map<long, std::size_t> frame_of;
  auto& tr = ff.trajectory;
  tr.replica_id = ff.header.value("replica", 0);
  try {
    for (const auto& row : table.rows) {
      const long rec = std::stol(row[0]);
      auto it = frame_of.find(rec);
      if (it == frame_of.end()) {
        it = frame_of.emplace(rec, tr.times.size()).first;
        tr.times.push_back(std::stod(row[1]));
        tr.residuals.push_back(std::stod(row[3]));
        tr.positions.emplace_back();
      }
      Eigen::VectorXd x(d);
      for (int a = 0; a < d; ++a) x(a) = std::stod(row[4 + a]);
      tr.positions[it->second].push_back(std::move(x));
    }
  } catch (const std::logic_error& e) {
    throw IoError(std::string("malformed number in frames table: ") + e.what());
  }
  for (const auto& f : tr.positions)
    if (f.size() != tr.positions.front().size()) throw IoError("frames table has ragged particle counts");
  return ff;
}

const std::vector<std::string>& scaling_columns() {
  static const std::vector<std::string> cols = {
      "N",        "T",           "t_scaled",        "nu_hat",        "nu_stderr",
      "nu_pred",  "hbar_emergent", "pair_sum",      "continuity_sign", "nu_convention",
      "ratio",    "ratio_stderr", "irrotationality", "jd_residual",   "replicas"};
  return cols;
}

std::string scaling_csv(const std::vector<ScalingPoint>& points, const nlohmann::json& conventions) {
  std::ostringstream os;
  const auto& cols = scaling_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
  os << '\n';
  const std::string pair = conventions.value("pair_sum", "unordered_pairs");
  const std::string cont = conventions.value("continuity_sign", "standard");
  const std::string nu = conventions.value("nu_convention", "both");
  for (const auto& p : points) {
    os << p.N << ',' << fmt(p.T) << ',' << fmt(p.t_scaled) << ',' << fmt(p.nu_hat) << ','
       << fmt(p.nu_stderr) << ',' << fmt(p.nu_pred) << ',' << fmt(p.hbar_emergent) << ',' << pair
       << ',' << cont << ',' << nu << ',' << fmt(p.ratio()) << ',' << fmt(p.ratio_stderr()) << ','
       << fmt(p.irrotationality) << ',' << fmt(p.jd_residual) << ',' << p.replicas << '\n';
  }
  return os.str();
}

}  // namespace beables::io
