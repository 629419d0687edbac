#pragma once

// Independent one-dimensional quantum reference: a norm-preserving
// Schrödinger solver, the Madelung (ρ, S) representation, and Nelson's
// stochastic mechanics as an Euler–Maruyama walker ensemble.

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace beables {

using Complex = std::complex<double>;

enum class Boundary { periodic, dirichlet };

/// Uniform 1D lattice on [−L/2, L/2]. Periodic: n points x_j = −L/2 + j·h,
/// h = L/n. Dirichlet: n interior points, h = L/(n+1), ψ(±L/2) = 0.
struct Grid1D {
  int n = 256;
  double length = 20.0;
  Boundary boundary = Boundary::periodic;

  double spacing() const;
  double x(int j) const;
  std::vector<double> points() const;
  bool operator==(const Grid1D&) const = default;
};

struct WaveFunction {
  Grid1D grid;
  std::vector<Complex> psi;
  double hbar = 1.0;
  double mass = 1.0;  // the μ of the kinetic term −ħ²/(2μ)∂²
  double time = 0.0;

  double norm() const;  // Σ|ψ|²·h
  std::vector<double> density() const;
  double mean_position() const;
  double width() const;  // RMS spread about the mean
};

struct MadelungPair {
  Grid1D grid;
  std::vector<double> rho;
  std::vector<double> S;     // action units; 0 on masked cells
  std::vector<bool> valid;   // false below the density floor
  double hbar = 1.0;
};

struct DriftField {
  Grid1D grid;
  std::vector<double> b;
  std::vector<bool> valid;
  /// Linear interpolation; invalid cells contribute zero drift.
  double at(double x) const;
};

struct NelsonEnsemble {
  std::vector<double> walkers;
  double nu = 0.5;
  double time = 0.0;
  std::int64_t reflections = 0;
};

struct EvolveReport {
  double accuracy_ratio = 0.0;  // dt·E_max/ħ
  std::vector<std::string> warnings;
};

struct EvolveOptions {
  bool width_monitor = true;  // abort when 4σ reaches 0.8·L/2 (periodic grids)
  EvolveReport* report = nullptr;
};

/// Normalized Gaussian packet exp(−(x−x₀)²/(4σ²) + i p₀x/ħ).
WaveFunction gaussian_packet(const Grid1D& grid, double sigma, double x0, double p0, double hbar,
                             double mass);

/// Ground state of V = ½μω₀²x²: a Gaussian with position variance ħ/(2μω₀).
WaveFunction harmonic_ground_state(const Grid1D& grid, double omega0, double hbar, double mass);

/// n-th eigenstate of the same oscillator (Hermite functions, n ≤ 20).
WaveFunction harmonic_eigenstate(const Grid1D& grid, int level, double omega0, double hbar,
                                 double mass);

std::vector<double> harmonic_potential(const Grid1D& grid, double omega0, double mass);

/// iħ∂ₜψ = [−ħ²/(2μ)∂² + V]ψ: Strang split-step Fourier on periodic grids,
/// Crank–Nicolson on Dirichlet grids. A warning is recorded when
/// dt·E_max/ħ > 0.1.
WaveFunction evolve_schrodinger(const WaveFunction& psi, const std::vector<double>& V, double dt,
                                std::int64_t steps, const EvolveOptions& options = {});

/// ψ = √ρ·exp(iS/ħ), renormalized. Negative ρ is rejected.
WaveFunction build_wavefunction(const MadelungPair& m, double mass = 1.0);

/// ρ = |ψ|², S = ħ·arg ψ unwrapped outward from the densest cell. Cells
/// below floor·max ρ are masked; unwrapping restarts past a masked gap.
MadelungPair madelung_decompose(const WaveFunction& psi, double floor = 1e-10);

/// ψ → exp(iE·t/ħ)·ψ.
WaveFunction phase_renormalize(const WaveFunction& psi, double E, double t_now);

/// b = (1/μ)∇S + ν∇ln ρ from the wavefunction (spectral derivatives on
/// periodic grids, central differences otherwise).
DriftField nelson_drift(const WaveFunction& psi, double nu, double floor = 1e-12);

/// Same drift from a Madelung pair by central differences.
DriftField nelson_drift(const MadelungPair& m, double nu, double mass);

/// Draws walkers from |ψ|² (piecewise constant per cell).
NelsonEnsemble sample_walkers(const WaveFunction& psi, std::size_t count, double nu,
                              std::uint64_t seed);

/// Drift at the start of each substep as a function of time.
using DriftProvider = std::function<const DriftField&(double t)>;

/// Euler–Maruyama dx = b(x,t)dt + √(2ν)dW. Walker k draws from its own
/// stream derived from (seed, k). Walkers leaving [−L/2, L/2] are reflected.
NelsonEnsemble nelson_evolve(const NelsonEnsemble& ensemble, const DriftProvider& drift,
                             const Grid1D& domain, double dt, std::int64_t steps,
                             std::uint64_t seed);

/// Frozen drift from a single wavefunction. The osmotic term uses
/// osmotic_nu when given and the walker noise ν otherwise; only
/// osmotic_nu = ν keeps |ψ|² equivariant.
NelsonEnsemble nelson_evolve(const NelsonEnsemble& ensemble, const WaveFunction& psi, double dt,
                             std::int64_t steps, std::uint64_t seed,
                             std::optional<double> osmotic_nu = std::nullopt);

/// Drift recomputed each substep from ψ co-evolved under V.
NelsonEnsemble nelson_evolve_coevolved(const NelsonEnsemble& ensemble, const WaveFunction& psi0,
                                       const std::vector<double>& V, double dt,
                                       std::int64_t steps, std::uint64_t seed,
                                       WaveFunction* psi_final = nullptr,
                                       std::optional<double> osmotic_nu = std::nullopt);

/// Histogram density of samples on cells of width `bin` centred like the
/// grid points coarsened by an integer factor.
std::vector<double> histogram_density(const std::vector<double>& samples, const Grid1D& grid,
                                      int coarsen = 1);

/// Sums groups of `factor` cells and divides by factor (density stays a density).
std::vector<double> coarsen_density(const std::vector<double>& rho, int factor);

enum class DensityMetric { L1, KS };

/// L1 = Σ|a − b|·h, KS = max |cumsum(a)·h − cumsum(b)·h|.
double compare_densities(const std::vector<double>& rho_a, const std::vector<double>& rho_b,
                         double spacing, DensityMetric metric);

}  // namespace beables
