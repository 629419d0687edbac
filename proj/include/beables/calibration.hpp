#pragma once

// Synthetic inputs with known answers for the field and diffusion
// estimators. Each generator returns the raw numbers; thresholds are left to
// the caller.

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "beables/estimators.hpp"

namespace beables {

/// Independent Brownian particles, dx = √(2ν)dW per coordinate.
std::vector<EigenTrajectory> brownian_ensemble(int replicas, int particles, int dims,
                                               std::int64_t steps, double dt, double nu,
                                               std::uint64_t seed);

/// One replica of `particles` stationary Ornstein–Uhlenbeck walkers
/// dx = −θx dt + √(2ν)dW, recorded at t = 0, τ, …, frames·τ with the exact
/// transition kernel.
EigenTrajectory ou_ensemble(int particles, int frames, double tau, double theta, double nu,
                            std::uint64_t seed);

struct CalibrationReport {
  double brownian_nu = 0.0;
  double brownian_msd = 0.0;
  double brownian_msd_stderr = 0.0;
  double brownian_qv = 0.0;

  double ou_theta = 0.0;
  double ou_tau = 0.0;
  double ou_expected_slope = 0.0;  // (e^{−θτ} − 1)/τ, exact for a forward difference
  double ou_slope = 0.0;

  std::vector<int> continuity_cells;
  std::vector<double> continuity_residuals;
  double continuity_order = 0.0;  // smallest pairwise order over refinements

  double gradient_irrotationality = 0.0;
  double rotational_irrotationality = 0.0;
};

/// Runs every synthetic case once.
CalibrationReport run_calibration(std::uint64_t seed);

/// Slope of b(x) over valid cells within `half_width` of the origin.
double drift_slope(const FieldEstimate& drift, double half_width);

/// Observed convergence order of a 2D advected Gaussian under joint grid
/// and time-step refinement (Δt ∝ h); one residual per entry of cells.
std::vector<double> advected_gaussian_residuals(const std::vector<int>& cells);

/// Irrotationality residual of the gradient field ∇exp(−(x² + xy + 2y²)/2)
/// and of the rigid rotation (−y, x) on a cells×cells grid over [−2, 2]².
double gradient_field_residual(int cells);
double rotational_field_residual(int cells);

nlohmann::json to_json(const CalibrationReport& r);

}  // namespace beables
