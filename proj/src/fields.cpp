#include <algorithm>
#include <cmath>
#include <numeric>

#include "beables/errors.hpp"
#include "beables/estimators.hpp"

namespace beables {

Grid Grid::line(double lo, double hi, int cells, int coord) {
  return Grid{{Axis{lo, hi, cells}}, {coord}};
}

Grid Grid::square(double lo, double hi, int cells) {
  return Grid{{Axis{lo, hi, cells}, Axis{lo, hi, cells}}, {0, 1}};
}

std::size_t Grid::size() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= static_cast<std::size_t>(a.cells);
  return n;
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (const auto& a : axes) v *= a.spacing();
  return v;
}

std::vector<int> Grid::unravel(std::size_t cell) const {
  std::vector<int> idx(axes.size());
  for (int k = dims() - 1; k >= 0; --k) {
    idx[k] = static_cast<int>(cell % axes[k].cells);
    cell /= axes[k].cells;
  }
  return idx;
}

std::size_t Grid::ravel(const std::vector<int>& idx) const {
  std::size_t c = 0;
  for (int k = 0; k < dims(); ++k) c = c * axes[k].cells + static_cast<std::size_t>(idx[k]);
  return c;
}

Eigen::VectorXd Grid::center(std::size_t cell) const {
  const auto idx = unravel(cell);
  Eigen::VectorXd x(dims());
  for (int k = 0; k < dims(); ++k) x(k) = axes[k].center(idx[k]);
  return x;
}

namespace {

void check_grid(const Grid& g) {
  if (g.axes.empty()) throw ContractError("grid has no axes");
  if (g.coords.size() != g.axes.size()) throw ContractError("grid: coords and axes differ in length");
  for (const auto& a : g.axes)
    if (a.cells < 1 || !(a.hi > a.lo)) throw ContractError("grid: degenerate axis");
}

// Calls fn(cell, weight) for every cell with the separable Gaussian kernel
// centred at p. Per-axis factors are computed once per sample.
template <typename Fn>
void for_each_kernel_weight(const Grid& grid, const double* p, double h,
                            std::vector<std::vector<double>>& scratch, Fn&& fn) {
  const int dims = grid.dims();
  scratch.resize(dims);
  const double inv2h2 = 0.5 / (h * h);
  for (int k = 0; k < dims; ++k) {
    const auto& ax = grid.axes[k];
    scratch[k].resize(ax.cells);
    for (int m = 0; m < ax.cells; ++m) {
      const double z = ax.center(m) - p[k];
      scratch[k][m] = std::exp(-z * z * inv2h2);
    }
  }
  if (dims == 1) {
    for (int m = 0; m < grid.axes[0].cells; ++m) fn(static_cast<std::size_t>(m), scratch[0][m]);
    return;
  }
  const std::size_t total = grid.size();
  std::vector<int> idx(dims, 0);
  for (std::size_t c = 0; c < total; ++c) {
    double w = 1.0;
    for (int k = 0; k < dims; ++k) w *= scratch[k][idx[k]];
    fn(c, w);
    for (int k = dims - 1; k >= 0; --k) {
      if (++idx[k] < grid.axes[k].cells) break;
      idx[k] = 0;
    }
  }
}

std::size_t nearest_frame(const EigenTrajectory& t, double query) {
  if (t.times.empty()) throw ContractError("trajectory has no frames");
  std::size_t best = 0;
  for (std::size_t k = 1; k < t.times.size(); ++k)
    if (std::abs(t.times[k] - query) < std::abs(t.times[best] - query)) best = k;
  return best;
}

double quantile(std::vector<double> x, double q) {
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

// Nadaraya–Watson regression of targets on points; also fills rho.
FieldEstimate regress(const Eigen::MatrixXd& points, const Eigen::MatrixXd& targets,
                      const Grid& grid, double h, double min_eff) {
  const std::size_t cells = grid.size();
  const int dims = grid.dims();
  std::vector<double> sw(cells, 0.0), sw2(cells, 0.0);
  Eigen::MatrixXd swy = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cells), dims);
  Eigen::MatrixXd swy2 = swy;
  std::vector<std::vector<double>> scratch;
  std::vector<double> p(dims);
  for (Eigen::Index s = 0; s < points.rows(); ++s) {
    for (int k = 0; k < dims; ++k) p[k] = points(s, k);
    for_each_kernel_weight(grid, p.data(), h, scratch, [&](std::size_t c, double w) {
      if (w == 0.0) return;
      sw[c] += w;
      sw2[c] += w * w;
      for (int k = 0; k < dims; ++k) {
        const double y = targets(s, k);
        swy(static_cast<Eigen::Index>(c), k) += w * y;
        swy2(static_cast<Eigen::Index>(c), k) += w * y * y;
      }
    });
  }
  FieldEstimate out;
  out.grid = grid;
  out.bandwidth = h;
  out.n_samples = static_cast<std::size_t>(points.rows());
  out.v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cells), dims);
  out.v_stderr = out.v;
  out.valid.assign(cells, false);
  out.rho.assign(cells, 0.0);
  double mass = 0.0;
  for (std::size_t c = 0; c < cells; ++c) mass += sw[c];
  const double vol = grid.cell_volume();
  for (std::size_t c = 0; c < cells; ++c) {
    if (mass > 0.0) out.rho[c] = sw[c] / (mass * vol);
    if (sw[c] <= 0.0) continue;
    const double neff = sw[c] * sw[c] / sw2[c];
    if (neff < min_eff) continue;
    out.valid[c] = true;
    const auto ci = static_cast<Eigen::Index>(c);
    for (int k = 0; k < dims; ++k) {
      const double m = swy(ci, k) / sw[c];
      const double var = std::max(0.0, swy2(ci, k) / sw[c] - m * m);
      out.v(ci, k) = m;
      out.v_stderr(ci, k) = std::sqrt(var * sw2[c]) / sw[c];
    }
  }
  return out;
}

// Cell offset by ±1 along axis k, or npos at the boundary.
constexpr std::size_t npos = static_cast<std::size_t>(-1);

std::size_t neighbour(const Grid& g, const std::vector<int>& idx, int k, int step) {
  auto j = idx;
  j[k] += step;
  if (j[k] < 0 || j[k] >= g.axes[k].cells) return npos;
  return g.ravel(j);
}

bool is_valid(const FieldEstimate& f, std::size_t c) { return f.valid.empty() || f.valid[c]; }

}  // namespace

double silverman_bandwidth(const Eigen::MatrixXd& points) {
  const auto n = points.rows();
  const auto k = points.cols();
  if (n < 2 || k < 1) throw ContractError("silverman_bandwidth: need >= 2 samples");
  double h = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < k; ++j) {
    std::vector<double> col(points.col(j).data(), points.col(j).data() + n);
    const double m = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : col) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    double spread = sd;
    double hj;
    if (k == 1) {
      const double iqr = quantile(col, 0.75) - quantile(col, 0.25);
      if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
      hj = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
    } else {
      hj = spread * std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(k) + 4.0));
    }
    if (hj > 0.0) h = std::min(h, hj);
  }
  if (!std::isfinite(h)) throw ContractError("silverman_bandwidth: samples have zero spread");
  return h;
}

FieldEstimate kde_density(const Eigen::MatrixXd& points, std::span<const double> weights,
                          const Grid& grid, double bandwidth) {
  check_grid(grid);
  if (points.rows() == 0) throw ContractError("kde_density: empty sample");
  if (points.cols() != grid.dims()) throw ContractError("kde_density: point dimension != grid dimension");
  if (!(bandwidth > 0.0)) throw ContractError("kde_density: bandwidth must be > 0");
  if (!weights.empty() && weights.size() != static_cast<std::size_t>(points.rows()))
    throw ContractError("kde_density: weights and points differ in length");
  const int dims = grid.dims();
  std::vector<double> acc(grid.size(), 0.0);
  std::vector<std::vector<double>> scratch;
  std::vector<double> p(dims);
  for (Eigen::Index s = 0; s < points.rows(); ++s) {
    const double ws = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(s)];
    if (ws < 0.0) throw ContractError("kde_density: negative weight");
    if (ws == 0.0) continue;
    for (int k = 0; k < dims; ++k) p[k] = points(s, k);
    for_each_kernel_weight(grid, p.data(), bandwidth, scratch,
                           [&](std::size_t c, double w) { acc[c] += ws * w; });
  }
  double mass = 0.0;
  for (double a : acc) mass += a;
  if (!(mass > 0.0)) throw ContractError("kde_density: no mass falls on the grid");
  const double scale = 1.0 / (mass * grid.cell_volume());
  FieldEstimate out;
  out.grid = grid;
  out.bandwidth = bandwidth;
  out.n_samples = static_cast<std::size_t>(points.rows());
  out.rho.resize(acc.size());
  for (std::size_t c = 0; c < acc.size(); ++c) out.rho[c] = acc[c] * scale;
  return out;
}

Eigen::MatrixXd ensemble_points(const std::vector<EigenTrajectory>& trajectories,
                                double query_time, const Grid& grid) {
  check_grid(grid);
  std::size_t total = 0;
  for (const auto& t : trajectories) total += static_cast<std::size_t>(t.particles());
  if (total == 0) throw ContractError("empty ensemble");
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(total), grid.dims());
  Eigen::Index row = 0;
  for (const auto& t : trajectories) {
    if (t.particles() == 0) continue;
    const auto k = nearest_frame(t, query_time);
    for (const auto& x : t.positions[k]) {
      for (int a = 0; a < grid.dims(); ++a) {
        if (grid.coords[a] >= x.size()) throw ContractError("grid coordinate exceeds particle dimension");
        pts(row, a) = x(grid.coords[a]);
      }
      ++row;
    }
  }
  return pts;
}

FieldEstimate estimate_density(const std::vector<EigenTrajectory>& trajectories,
                               double query_time, const Grid& grid, double bandwidth) {
  auto f = kde_density(ensemble_points(trajectories, query_time, grid), {}, grid, bandwidth);
  f.time = query_time;
  return f;
}

namespace {

enum class Difference { symmetric, forward };

FieldEstimate velocity_regression(const std::vector<EigenTrajectory>& trajectories,
                                  double query_time, const Grid& grid, double bandwidth, int lag,
                                  double min_eff, Difference diff) {
  check_grid(grid);
  if (!(bandwidth > 0.0)) throw ContractError("velocity estimate: bandwidth must be > 0");
  if (lag < 1) throw ContractError("velocity estimate: lag must be >= 1");
  const int dims = grid.dims();
  std::vector<double> pts, tgt;
  for (const auto& t : trajectories) {
    if (t.particles() == 0) continue;
    const auto k = nearest_frame(t, query_time);
    const auto kl = static_cast<std::size_t>(lag);
    const bool need_back = diff == Difference::symmetric;
    if (k + kl >= t.frames() || (need_back && k < kl))
      throw ContractError("velocity estimate: insufficient temporal neighbours around query time");
    const std::size_t k0 = need_back ? k - kl : k;
    const double span = t.times[k + kl] - t.times[k0];
    if (!(span > 0.0)) throw ContractError("velocity estimate: non-increasing times");
    for (int i = 0; i < t.particles(); ++i) {
      for (int a = 0; a < dims; ++a) {
        const int c = grid.coords[a];
        pts.push_back(t.positions[k][i](c));
        tgt.push_back((t.positions[k + kl][i](c) - t.positions[k0][i](c)) / span);
      }
    }
  }
  if (pts.empty()) throw ContractError("empty ensemble");
  const auto n = static_cast<Eigen::Index>(pts.size() / dims);
  const Eigen::MatrixXd p = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(pts.data(), n, dims);
  const Eigen::MatrixXd y = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(tgt.data(), n, dims);
  auto f = regress(p, y, grid, bandwidth, min_eff);
  f.time = query_time;
  return f;
}

}  // namespace

FieldEstimate estimate_current_velocity(const std::vector<EigenTrajectory>& trajectories,
                                        double query_time, const Grid& grid, double bandwidth,
                                        int lag, double min_effective_samples) {
  return velocity_regression(trajectories, query_time, grid, bandwidth, lag,
                             min_effective_samples, Difference::symmetric);
}

FieldEstimate estimate_forward_drift(const std::vector<EigenTrajectory>& trajectories,
                                     double query_time, const Grid& grid, double bandwidth,
                                     int lag, double min_effective_samples) {
  return velocity_regression(trajectories, query_time, grid, bandwidth, lag,
                             min_effective_samples, Difference::forward);
}

FieldEstimate estimate_osmotic_velocity(const FieldEstimate& rho_estimate, double nu, double floor) {
  const Grid& g = rho_estimate.grid;
  check_grid(g);
  if (rho_estimate.rho.size() != g.size()) throw ContractError("osmotic velocity: rho does not match grid");
  const std::size_t cells = g.size();
  const int dims = g.dims();
  const double rmax = *std::max_element(rho_estimate.rho.begin(), rho_estimate.rho.end());
  const double cut = floor * rmax;
  auto ok = [&](std::size_t c) { return c != npos && rho_estimate.rho[c] > cut && rho_estimate.rho[c] > 0.0; };

  FieldEstimate out = rho_estimate;
  out.u = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cells), dims);
  out.valid.assign(cells, false);
  std::size_t n_valid = 0;
  for (std::size_t c = 0; c < cells; ++c) {
    if (!ok(c)) continue;
    const auto idx = g.unravel(c);
    bool good = true;
    for (int k = 0; k < dims && good; ++k)
      good = ok(neighbour(g, idx, k, +1)) && ok(neighbour(g, idx, k, -1));
    if (!good) continue;
    for (int k = 0; k < dims; ++k) {
      const double lp = std::log(rho_estimate.rho[neighbour(g, idx, k, +1)]);
      const double lm = std::log(rho_estimate.rho[neighbour(g, idx, k, -1)]);
      out.u(static_cast<Eigen::Index>(c), k) = nu * (lp - lm) / (2.0 * g.axes[k].spacing());
    }
    out.valid[c] = true;
    ++n_valid;
  }
  if (n_valid == 0) throw ContractError("osmotic velocity: every cell is masked");
  return out;
}

double continuity_residual(const FieldEstimate& rho_before, const FieldEstimate& rho_after,
                           const FieldEstimate& v_field, double dt_between) {
  const Grid& g = rho_before.grid;
  if (!(rho_after.grid == g) || !(v_field.grid == g)) throw ContractError("continuity_residual: grid mismatch");
  if (!(dt_between > 0.0)) throw ContractError("continuity_residual: dt must be > 0");
  const std::size_t cells = g.size();
  const int dims = g.dims();
  if (rho_before.rho.size() != cells || rho_after.rho.size() != cells ||
      v_field.v.rows() != static_cast<Eigen::Index>(cells) || v_field.v.cols() != dims)
    throw ContractError("continuity_residual: field sizes do not match grid");
  std::vector<double> mid(cells);
  for (std::size_t c = 0; c < cells; ++c) mid[c] = 0.5 * (rho_before.rho[c] + rho_after.rho[c]);
  double total = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    if (!is_valid(v_field, c)) continue;
    const auto idx = g.unravel(c);
    double div = 0.0;
    bool interior = true;
    for (int k = 0; k < dims && interior; ++k) {
      const auto p = neighbour(g, idx, k, +1);
      const auto m = neighbour(g, idx, k, -1);
      if (p == npos || m == npos || !is_valid(v_field, p) || !is_valid(v_field, m)) {
        interior = false;
        break;
      }
      div += (mid[p] * v_field.v(static_cast<Eigen::Index>(p), k) -
              mid[m] * v_field.v(static_cast<Eigen::Index>(m), k)) /
             (2.0 * g.axes[k].spacing());
    }
    if (!interior) continue;
    const double rdot = (rho_after.rho[c] - rho_before.rho[c]) / dt_between;
    total += std::abs(rdot + div);
  }
  return total * g.cell_volume();
}

double irrotationality_residual(const FieldEstimate& v_field) {
  const Grid& g = v_field.grid;
  const int dims = g.dims();
  if (dims < 2) return 0.0;
  const std::size_t cells = g.size();
  if (v_field.v.rows() != static_cast<Eigen::Index>(cells) || v_field.v.cols() != dims)
    throw ContractError("irrotationality_residual: field does not match grid");
  double max_anti = 0.0, max_grad = 0.0;
  Eigen::MatrixXd jac(dims, dims);
  for (std::size_t c = 0; c < cells; ++c) {
    if (!is_valid(v_field, c)) continue;
    const auto idx = g.unravel(c);
    bool interior = true;
    for (int b = 0; b < dims && interior; ++b) {
      const auto p = neighbour(g, idx, b, +1);
      const auto m = neighbour(g, idx, b, -1);
      if (p == npos || m == npos || !is_valid(v_field, p) || !is_valid(v_field, m)) {
        interior = false;
        break;
      }
      for (int a = 0; a < dims; ++a)
        jac(a, b) = (v_field.v(static_cast<Eigen::Index>(p), a) - v_field.v(static_cast<Eigen::Index>(m), a)) /
                    (2.0 * g.axes[b].spacing());
    }
    if (!interior) continue;
    max_anti = std::max(max_anti, (0.5 * (jac - jac.transpose())).norm());
    max_grad = std::max(max_grad, jac.norm());
  }
  return max_grad > 0.0 ? max_anti / max_grad : 0.0;
}

}  // namespace beables
