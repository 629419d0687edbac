#pragma once

// Shared test oracles.

#include <algorithm>
#include <cmath>
#include <vector>

#include "beables/matrix_core.hpp"

namespace beables::testing {

/// Central finite-difference force: one symmetric perturbation per
/// independent entry. A diagonal step h changes U by −F_ii·h, an off-diagonal
/// pair step by −2F_ij·h.
inline std::vector<SymMatrix> fd_force(const MatrixConfiguration& c, const ModelParams& p,
                                       double h = 1e-5) {
  std::vector<SymMatrix> out(c.d(), SymMatrix(c.N()));
  MatrixConfiguration work = c;
  for (int a = 0; a < c.d(); ++a)
    for (int i = 0; i < c.N(); ++i)
      for (int j = i; j < c.N(); ++j) {
        const double x = c.X[a](i, j);
        work.X[a].at(i, j) = x + h;
        const double up = potential_energy(work, p);
        work.X[a].at(i, j) = x - h;
        const double down = potential_energy(work, p);
        work.X[a].at(i, j) = x;
        out[a].at(i, j) = -(up - down) / (2.0 * h) / (i == j ? 1.0 : 2.0);
      }
  return out;
}

/// max |F − F_fd| / max |F_fd|.
inline double force_relative_error(const std::vector<SymMatrix>& f, const std::vector<SymMatrix>& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < f.size(); ++a)
    for (std::size_t k = 0; k < f[a].packed().size(); ++k) {
      num = std::max(num, std::abs(f[a].packed()[k] - ref[a].packed()[k]));
      den = std::max(den, std::abs(ref[a].packed()[k]));
    }
  return den > 0.0 ? num / den : num;
}

inline double max_abs_diff(const std::vector<SymMatrix>& f, const std::vector<SymMatrix>& g) {
  double m = 0.0;
  for (std::size_t a = 0; a < f.size(); ++a)
    for (std::size_t k = 0; k < f[a].packed().size(); ++k)
      m = std::max(m, std::abs(f[a].packed()[k] - g[a].packed()[k]));
  return m;
}

inline SymMatrix sym(const Eigen::MatrixXd& m) { return SymMatrix::from_upper(m); }

}  // namespace beables::testing
