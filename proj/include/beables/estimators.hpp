#pragma once

// Statistical estimators that turn ensembles of eigenvalue trajectories into
// densities, Nelson velocities and diffusion constants, plus the scaling-law
// formulas they are compared against.

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "beables/dynamics.hpp"
#include "beables/matrix_core.hpp"

namespace beables {

// ---------------------------------------------------------------------------
// Particle tracking

struct EigenTrajectory {
  std::vector<double> times;
  std::vector<std::vector<Eigen::VectorXd>> positions;  // [frame][particle], identity-matched
  std::vector<double> residuals;                        // joint-diagonalization residual per frame
  int replica_id = 0;

  std::size_t frames() const { return times.size(); }
  int particles() const { return positions.empty() ? 0 : static_cast<int>(positions.front().size()); }
  int dims() const {
    return particles() == 0 ? 0 : static_cast<int>(positions.front().front().size());
  }
};

/// Minimum-cost perfect matching on a square cost matrix (Hungarian
/// algorithm with potentials, O(n³)). Returns col[row].
std::vector<int> optimal_assignment(const Eigen::MatrixXd& cost);

/// Largest N for which track_particles solves the assignment exactly.
inline constexpr int kExactAssignmentLimit = 64;

/// Frame-to-frame identity assignment minimizing total squared displacement:
/// exact for N ≤ 64, greedy nearest-neighbour with collision resolution above.
EigenTrajectory track_particles(const std::vector<ParticleFrame>& frames,
                                const std::vector<double>& times, int replica_id = 0);

/// d = 1 convenience: spectra are already particle positions.
std::vector<ParticleFrame> frames_from_spectra(const std::vector<Spectrum>& spectra);

// ---------------------------------------------------------------------------
// Gridded fields

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  int cells = 1;

  double spacing() const { return (hi - lo) / cells; }
  double center(int k) const { return lo + (k + 0.5) * spacing(); }
  bool operator==(const Axis&) const = default;
};

/// Cell-centred rectangular lattice. Axis k reads coordinate coords[k] of a
/// particle position, so a 1D grid over coordinate 0 gives a marginal.
struct Grid {
  std::vector<Axis> axes;
  std::vector<int> coords;

  static Grid line(double lo, double hi, int cells, int coord = 0);
  static Grid square(double lo, double hi, int cells);

  int dims() const { return static_cast<int>(axes.size()); }
  std::size_t size() const;
  double cell_volume() const;
  std::vector<int> unravel(std::size_t cell) const;
  std::size_t ravel(const std::vector<int>& idx) const;
  Eigen::VectorXd center(std::size_t cell) const;
  bool operator==(const Grid&) const = default;
};

struct FieldEstimate {
  Grid grid;
  std::vector<double> rho;        // per cell, Σ rho·vol = 1
  Eigen::MatrixXd v;              // cells × dims, current velocity (may be empty)
  Eigen::MatrixXd v_stderr;       // cells × dims
  Eigen::MatrixXd u;              // cells × dims, osmotic velocity (may be empty)
  std::vector<bool> valid;        // cells where v/u are defined
  double bandwidth = 0.0;
  std::size_t n_samples = 0;
  double time = 0.0;
};

/// Silverman-style rule: 0.9·min(σ, IQR/1.34)·n^(−1/5) in 1D, the per-axis
/// normal-reference rule σ·n^(−1/(k+4)) in k > 1 dimensions (minimum over axes).
double silverman_bandwidth(const Eigen::MatrixXd& points);

/// Weighted Gaussian KDE of points (rows, in grid coordinates) normalized on the grid.
FieldEstimate kde_density(const Eigen::MatrixXd& points, std::span<const double> weights,
                          const Grid& grid, double bandwidth);

/// Projects all particles of all replicas at the frame nearest query_time
/// onto the grid coordinates.
Eigen::MatrixXd ensemble_points(const std::vector<EigenTrajectory>& trajectories,
                                double query_time, const Grid& grid);

FieldEstimate estimate_density(const std::vector<EigenTrajectory>& trajectories,
                               double query_time, const Grid& grid, double bandwidth);

/// Nelson current velocity v(λ) = E[(x(t+τ) − x(t−τ))/(2τ) | x(t) ≈ λ] by
/// Nadaraya–Watson regression. Cells with fewer than min_effective_samples
/// effective samples are marked invalid.
FieldEstimate estimate_current_velocity(const std::vector<EigenTrajectory>& trajectories,
                                        double query_time, const Grid& grid, double bandwidth,
                                        int lag, double min_effective_samples = 10.0);

/// Forward mean velocity b(λ) = E[(x(t+τ) − x(t))/τ | x(t) ≈ λ], stored in v.
FieldEstimate estimate_forward_drift(const std::vector<EigenTrajectory>& trajectories,
                                     double query_time, const Grid& grid, double bandwidth,
                                     int lag, double min_effective_samples = 10.0);

/// u = ν ∇ ln ρ by central differences. Cells below floor·max(ρ), boundary
/// cells and their neighbours are invalid. Throws if nothing survives.
FieldEstimate estimate_osmotic_velocity(const FieldEstimate& rho_estimate, double nu,
                                        double floor = 1e-6);

/// L1 norm over interior cells of (ρ₁ − ρ₀)/Δt + ∇·(ρ̄ v), ρ̄ = (ρ₀ + ρ₁)/2,
/// i.e. the standard continuity equation ρ̇ + ∇·(ρv) = 0 centred at the
/// midpoint. Cells where v is invalid (or next to one) are skipped.
double continuity_residual(const FieldEstimate& rho_before, const FieldEstimate& rho_after,
                           const FieldEstimate& v_field, double dt_between);

/// max over valid interior cells of ‖antisym(∂v)‖_F divided by the max of
/// ‖∂v‖_F. 0 for one-dimensional grids.
double irrotationality_residual(const FieldEstimate& v_field);

// ---------------------------------------------------------------------------
// Diffusion

enum class DiffusionMethod { msd_slope, quadratic_variation };

struct DiffusionOptions {
  bool remove_com = true;    // subtract the per-direction particle mean (trace mode)
  bool remove_drift = true;  // subtract each coordinate's mean displacement per lag
  int bootstrap_samples = 200;
  std::uint64_t bootstrap_seed = 0x5eed;
};

struct DiffusionEstimate {
  double nu_hat = 0.0;
  double std_error = 0.0;
  double fit_min = 0.0;
  double fit_max = 0.0;
  DiffusionMethod method = DiffusionMethod::msd_slope;
  std::vector<double> per_direction;  // anisotropy diagnostic
};

/// Per-scalar-coordinate diffusion constant averaged over particles,
/// directions and replicas; stderr by bootstrap over replicas (over
/// coordinate series when there is a single replica).
DiffusionEstimate estimate_diffusion(const std::vector<EigenTrajectory>& trajectories,
                                     double fit_min, double fit_max, DiffusionMethod method,
                                     const DiffusionOptions& options = {});

// ---------------------------------------------------------------------------
// Scaling laws

/// t = N·T / (8(d−1)μω²). DomainError for d = 1.
double scaled_temperature(const ModelParams& params, double T, int N);
/// Inverse of scaled_temperature for the temperature.
double temperature_for(const ModelParams& params, double t_scaled, int N);
/// ν_λ = ω·d·t^{3/2} / (4(d−1)^{3/2}).
double predicted_diffusion(const ModelParams& params, double t_scaled);
/// ħ = μ·ν_λ.
double emergent_hbar(const ModelParams& params, double nu_lambda);

struct ScalingPoint {
  int N = 0;
  double T = 0.0;
  double t_scaled = 0.0;
  double nu_hat = 0.0;
  double nu_stderr = 0.0;
  double nu_pred = 0.0;
  double hbar_emergent = 0.0;  // μ·ν̂
  double irrotationality = 0.0;
  double jd_residual = 0.0;    // mean joint-diagonalization residual
  int replicas = 0;

  double ratio() const { return nu_pred > 0.0 ? nu_hat / nu_pred : 0.0; }
  double ratio_stderr() const { return nu_pred > 0.0 ? nu_stderr / nu_pred : 0.0; }
};

struct SweepSettings {
  int replicas = 8;
  std::uint64_t master_seed = 1;
  double initial_spread = 0.1;
  double dt = 1e-2;
  double gamma = 0.1;
  std::int64_t burn_in_steps = 2000;
  std::int64_t production_steps = 2000;
  int record_every = 1;
  double fit_min = 5e-2;  // [5dt, 50dt] for the default dt
  double fit_max = 5e-1;
  DiffusionMethod method = DiffusionMethod::msd_slope;
  int grid_cells = 24;
  int threads = 1;
};

/// For each N, T = 8(d−1)μω²·t/N; equilibrated Langevin replicas are
/// tracked and their diffusion constant compared with the prediction.
/// Replicas use seeds derived from (master_seed, N, replica).
std::vector<ScalingPoint> scaling_sweep(const ModelParams& base_params, double t_scaled,
                                        const std::vector<int>& N_list,
                                        const SweepSettings& settings);

/// One replica of the sweep: equilibrate, record, track.
EigenTrajectory sweep_replica(const ModelParams& params, double temperature,
                              const SweepSettings& settings, int replica);

}  // namespace beables
