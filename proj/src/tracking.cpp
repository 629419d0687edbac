#include <algorithm>
#include <limits>
#include <numeric>
#include <tuple>

#include "beables/errors.hpp"
#include "beables/estimators.hpp"

namespace beables {

std::vector<int> optimal_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ContractError("optimal_assignment: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; p[j] is the row matched to column j, way[] the
  // alternating-path predecessor.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) col[p[j] - 1] = j - 1;
  return col;
}

namespace {

std::vector<int> greedy_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<std::tuple<double, int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pairs.emplace_back(cost(i, j), i, j);
  std::sort(pairs.begin(), pairs.end());
  std::vector<int> col(n, -1);
  std::vector<char> taken(n, 0);
  int left = n;
  for (const auto& [c, i, j] : pairs) {
    if (col[i] >= 0 || taken[j]) continue;  // collision: keep the closer claim
    col[i] = j;
    taken[j] = 1;
    if (--left == 0) break;
  }
  return col;
}

}  // namespace

EigenTrajectory track_particles(const std::vector<ParticleFrame>& frames,
                                const std::vector<double>& times, int replica_id) {
  if (frames.size() != times.size())
    throw ContractError("track_particles: frames and times differ in length");
  EigenTrajectory traj;
  traj.replica_id = replica_id;
  if (frames.empty()) return traj;
  const std::size_t n = frames.front().positions.size();
  for (const auto& f : frames)
    if (f.positions.size() != n) throw ContractError("track_particles: particle count changes between frames");
  traj.times = times;
  traj.positions.reserve(frames.size());
  traj.residuals.reserve(frames.size());
  traj.positions.push_back(frames.front().positions);
  traj.residuals.push_back(frames.front().residual);
  const int ni = static_cast<int>(n);
  Eigen::MatrixXd cost(ni, ni);
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const auto& prev = traj.positions.back();
    const auto& cur = frames[f].positions;
    for (int i = 0; i < ni; ++i)
      for (int j = 0; j < ni; ++j) cost(i, j) = (prev[i] - cur[j]).squaredNorm();
    const auto col = ni <= kExactAssignmentLimit ? optimal_assignment(cost) : greedy_assignment(cost);
    std::vector<Eigen::VectorXd> next(n);
    for (int i = 0; i < ni; ++i) next[i] = cur[col[i]];
    traj.positions.push_back(std::move(next));
    traj.residuals.push_back(frames[f].residual);
  }
  return traj;
}

std::vector<ParticleFrame> frames_from_spectra(const std::vector<Spectrum>& spectra) {
  std::vector<ParticleFrame> frames;
  frames.reserve(spectra.size());
  for (const auto& s : spectra) {
    if (s.lambda.size() != 1) throw ContractError("frames_from_spectra: only defined for d = 1");
    ParticleFrame f;
    for (double x : s.lambda.front()) {
      Eigen::VectorXd p(1);
      p(0) = x;
      f.positions.push_back(p);
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace beables
