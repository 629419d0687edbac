#include "beables/calibration.hpp"

#include <cmath>
#include <random>

#include "beables/errors.hpp"
#include "beables/rng.hpp"
#include "beables/statistics.hpp"

namespace beables {

std::vector<EigenTrajectory> brownian_ensemble(int replicas, int particles, int dims,
                                               std::int64_t steps, double dt, double nu,
                                               std::uint64_t seed) {
  if (replicas < 1 || particles < 1 || dims < 1 || steps < 1 || !(dt > 0.0) || !(nu >= 0.0))
    throw ContractError("brownian_ensemble: invalid arguments");
  std::vector<EigenTrajectory> out(replicas);
  const double kick = std::sqrt(2.0 * nu * dt);
  for (int r = 0; r < replicas; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r), "calibration/brownian"));
    std::normal_distribution<double> gauss;
    auto& t = out[r];
    t.replica_id = r;
    std::vector<Eigen::VectorXd> x(particles, Eigen::VectorXd::Zero(dims));
    for (std::int64_t s = 0; s <= steps; ++s) {
      if (s > 0)
        for (auto& p : x)
          for (int a = 0; a < dims; ++a) p(a) += kick * gauss(rng);
      t.times.push_back(static_cast<double>(s) * dt);
      t.positions.push_back(x);
      t.residuals.push_back(0.0);
    }
  }
  return out;
}

EigenTrajectory ou_ensemble(int particles, int frames, double tau, double theta, double nu,
                            std::uint64_t seed) {
  if (particles < 1 || frames < 1 || !(tau > 0.0) || !(theta > 0.0) || !(nu > 0.0))
    throw ContractError("ou_ensemble: invalid arguments");
  Rng rng(derive_seed(seed, 0, "calibration/ou"));
  std::normal_distribution<double> gauss;
  const double var = nu / theta;
  const double decay = std::exp(-theta * tau);
  const double kick = std::sqrt(var * (1.0 - decay * decay));
  EigenTrajectory t;
  std::vector<Eigen::VectorXd> x(particles, Eigen::VectorXd(1));
  for (auto& p : x) p(0) = std::sqrt(var) * gauss(rng);
  for (int f = 0; f <= frames; ++f) {
    if (f > 0)
      for (auto& p : x) p(0) = decay * p(0) + kick * gauss(rng);
    t.times.push_back(f * tau);
    t.positions.push_back(x);
    t.residuals.push_back(0.0);
  }
  return t;
}

double drift_slope(const FieldEstimate& drift, double half_width) {
  std::vector<double> xs, bs;
  for (std::size_t c = 0; c < drift.grid.size(); ++c) {
    if (!drift.valid.empty() && !drift.valid[c]) continue;
    const double x = drift.grid.center(c)(0);
    if (std::abs(x) > half_width) continue;
    xs.push_back(x);
    bs.push_back(drift.v(static_cast<Eigen::Index>(c), 0));
  }
  if (xs.size() < 3) throw ContractError("drift_slope: fewer than 3 usable cells");
  return stats::fit_line(xs, bs).slope;
}

namespace {

FieldEstimate analytic_field(const Grid& grid) {
  FieldEstimate f;
  f.grid = grid;
  f.rho.assign(grid.size(), 0.0);
  f.v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), grid.dims());
  f.valid.assign(grid.size(), true);
  return f;
}

}  // namespace

std::vector<double> advected_gaussian_residuals(const std::vector<int>& cells) {
  const double s = 0.5, lo = -3.0, hi = 3.0;
  const Eigen::Vector2d c(0.7, -0.4);
  auto rho = [&](const Eigen::VectorXd& x, double t) {
    const Eigen::Vector2d y = x - c * t;
    return std::exp(-0.5 * y.squaredNorm() / (s * s)) / (2.0 * M_PI * s * s);
  };
  std::vector<double> out;
  for (int n : cells) {
    const Grid grid = Grid::square(lo, hi, n);
    const double dt = grid.axes[0].spacing();
    FieldEstimate before = analytic_field(grid), after = analytic_field(grid), v = analytic_field(grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto x = grid.center(k);
      before.rho[k] = rho(x, -0.5 * dt);
      after.rho[k] = rho(x, 0.5 * dt);
      v.v.row(static_cast<Eigen::Index>(k)) = c.transpose();
    }
    out.push_back(continuity_residual(before, after, v, dt));
  }
  return out;
}

double gradient_field_residual(int cells) {
  const Grid grid = Grid::square(-2.0, 2.0, cells);
  FieldEstimate f = analytic_field(grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto x = grid.center(k);
    const double phi = std::exp(-0.5 * (x(0) * x(0) + x(0) * x(1) + 2.0 * x(1) * x(1)));
    f.v(static_cast<Eigen::Index>(k), 0) = -(x(0) + 0.5 * x(1)) * phi;
    f.v(static_cast<Eigen::Index>(k), 1) = -(0.5 * x(0) + 2.0 * x(1)) * phi;
  }
  return irrotationality_residual(f);
}

double rotational_field_residual(int cells) {
  const Grid grid = Grid::square(-2.0, 2.0, cells);
  FieldEstimate f = analytic_field(grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto x = grid.center(k);
    f.v(static_cast<Eigen::Index>(k), 0) = -x(1);
    f.v(static_cast<Eigen::Index>(k), 1) = x(0);
  }
  return irrotationality_residual(f);
}

CalibrationReport run_calibration(std::uint64_t seed) {
  CalibrationReport r;

  r.brownian_nu = 0.25;
  const auto bm = brownian_ensemble(32, 16, 2, 2000, 1e-2, r.brownian_nu, seed);
  DiffusionOptions opts;
  opts.remove_com = false;
  opts.remove_drift = false;
  opts.bootstrap_seed = derive_seed(seed, 0, "calibration/bootstrap");
  const auto msd = estimate_diffusion(bm, 5e-2, 5e-1, DiffusionMethod::msd_slope, opts);
  r.brownian_msd = msd.nu_hat;
  r.brownian_msd_stderr = msd.std_error;
  r.brownian_qv = estimate_diffusion(bm, 5e-2, 5e-1, DiffusionMethod::quadratic_variation, opts).nu_hat;

  r.ou_theta = 1.0;
  r.ou_tau = 0.1;
  const double ou_nu = 0.5;
  r.ou_expected_slope = (std::exp(-r.ou_theta * r.ou_tau) - 1.0) / r.ou_tau;
  const auto ou = ou_ensemble(200000, 1, r.ou_tau, r.ou_theta, ou_nu, seed);
  const double sd = std::sqrt(ou_nu / r.ou_theta);
  const Grid line = Grid::line(-3.0 * sd, 3.0 * sd, 60);
  const std::vector<EigenTrajectory> ous{ou};
  const double bw = 0.5 * line.axes[0].spacing();
  r.ou_slope = drift_slope(estimate_forward_drift(ous, 0.0, line, bw, 1), 2.0 * sd);

  r.continuity_cells = {32, 64, 128};
  r.continuity_residuals = advected_gaussian_residuals(r.continuity_cells);
  r.continuity_order = INFINITY;
  for (std::size_t k = 0; k + 1 < r.continuity_residuals.size(); ++k) {
    const double ratio = static_cast<double>(r.continuity_cells[k + 1]) / r.continuity_cells[k];
    r.continuity_order = std::min(
        r.continuity_order,
        std::log(r.continuity_residuals[k] / r.continuity_residuals[k + 1]) / std::log(ratio));
  }

  r.gradient_irrotationality = gradient_field_residual(64);
  r.rotational_irrotationality = rotational_field_residual(64);
  return r;
}

nlohmann::json to_json(const CalibrationReport& r) {
  return {{"brownian",
           {{"nu_true", r.brownian_nu},
            {"nu_msd", r.brownian_msd},
            {"nu_msd_stderr", r.brownian_msd_stderr},
            {"nu_quadratic_variation", r.brownian_qv}}},
          {"ou_drift",
           {{"theta", r.ou_theta},
            {"tau", r.ou_tau},
            {"expected_slope", r.ou_expected_slope},
            {"slope", r.ou_slope}}},
          {"continuity",
           {{"cells", r.continuity_cells},
            {"residuals", r.continuity_residuals},
            {"observed_order", r.continuity_order}}},
          {"irrotationality",
           {{"gradient_field", r.gradient_irrotationality},
            {"rotational_field", r.rotational_irrotationality}}}};
}

}  // namespace beables
