#pragma once

// Time evolution of matrix configurations. The Lagrangian μ Tr Ẋ² − U gives
// 2μ Ẍ_a = F_a for every entry, so diagonal entries carry mass 2μ and each
// independent off-diagonal entry mass 4μ (K = μ V_ii² + 2μ V_ij²). The
// Langevin thermostat uses exactly these masses for its noise amplitudes.

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "json.hpp"

#include "beables/matrix_core.hpp"

namespace beables {

enum class IntegratorMode { microcanonical, langevin };
enum class NoiseTarget { all, off_diagonal };

struct IntegratorConfig {
  IntegratorMode mode = IntegratorMode::langevin;
  double dt = 1e-2;          // units of 1/ω
  std::int64_t steps = 1000;
  double gamma = 0.1;        // units of ω
  double temperature = 0.0;  // k_B = 1
  std::uint64_t seed = 0;
  int record_every = 1;
  int frame_every = 0;       // joint-diagonalize every k-th record, 0 = never
  NoiseTarget noise_target = NoiseTarget::all;
  bool project_trace = false;  // keep the trace (center-of-mass) mode out of the bath

  void validate() const;
  bool operator==(const IntegratorConfig&) const = default;
};

/// Kinetic degrees of freedom coupled to the bath.
int kinetic_dof(const ModelParams& params, const IntegratorConfig& integrator);

struct EnergyPair {
  double kinetic = 0.0;
  double potential = 0.0;
  double total() const { return kinetic + potential; }
};

struct TrajectoryRecord {
  std::vector<std::int64_t> steps;
  std::vector<double> times;
  std::vector<Spectrum> spectra;
  std::vector<EnergyPair> energies;
  std::vector<std::vector<double>> com_momenta;
  std::vector<ParticleFrame> frames;      // stride-controlled by frame_every
  std::vector<std::size_t> frame_records;  // record index of each frame
  int kinetic_dof = 0;
  bool com_conserved = true;  // false once noise acts on the trace mode
  nlohmann::json manifest;
  MatrixConfiguration final_state;

  std::size_t size() const { return times.size(); }
};

/// Velocity-Verlet step under force().
MatrixConfiguration step_leapfrog(const MatrixConfiguration& config, const ModelParams& params,
                                  double dt);

/// BAOAB underdamped Langevin step targeting exp(−(K+U)/T).
MatrixConfiguration step_langevin(const MatrixConfiguration& config, const ModelParams& params,
                                  double dt, double gamma, double temperature, Rng& rng,
                                  NoiseTarget target = NoiseTarget::all,
                                  bool project_trace = false);

/// Stateful stepper that caches the force between steps. A sequence of
/// advance() calls is bit-identical to the corresponding chain of
/// step_leapfrog / step_langevin calls with the same generator.
class Propagator {
 public:
  Propagator(MatrixConfiguration start, ModelParams params, IntegratorConfig integrator);

  void advance();
  const MatrixConfiguration& state() const { return state_; }
  std::int64_t step_index() const { return step_; }
  /// Throws NumericAbort if any entry of X or V is not finite.
  void check_finite() const;

 private:
  MatrixConfiguration state_;
  ModelParams params_;
  IntegratorConfig integrator_;
  std::vector<SymMatrix> force_;
  Rng rng_;
  std::int64_t step_ = 0;
};

nlohmann::json to_json(const ModelParams& p);
nlohmann::json to_json(const IntegratorConfig& c);

/// Runs integrator.steps steps, recording every record_every steps (the
/// initial state is always record 0). Throws NumericAbort on NaN/Inf.
TrajectoryRecord run(const MatrixConfiguration& config, const ModelParams& params,
                     const IntegratorConfig& integrator);

struct EquilibrationDiagnostics {
  std::int64_t burn_in_steps = 0;
  std::int64_t total_steps = 0;
  std::int64_t window_steps = 0;
  double tau_potential = 0.0;      // integrated autocorrelation time of U, in steps
  double kinetic_temperature = 0.0;
  bool converged = false;
};

class EquilibrationError : public std::runtime_error {
 public:
  EquilibrationError(const std::string& what, EquilibrationDiagnostics diag)
      : std::runtime_error(what), diagnostics(diag) {}
  EquilibrationDiagnostics diagnostics;
};

struct EquilibrationOptions {
  std::int64_t max_steps = 1'000'000;
  std::int64_t min_window = 200;
  std::int64_t check_every = 100;
};

struct EquilibrationResult {
  MatrixConfiguration config;
  EquilibrationDiagnostics diagnostics;
};

/// Runs Langevin dynamics until the kinetic temperature averaged over the
/// last max(min_window, 10·τ_U) steps is within tol (absolute) of the target.
/// burn_in_steps counts the steps that precede the accepted window.
EquilibrationResult equilibrate(const MatrixConfiguration& config, const ModelParams& params,
                                const IntegratorConfig& integrator, double tol,
                                const EquilibrationOptions& options = {});

struct TemperatureEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// T = 2⟨K⟩/n_dof with blocking error bars. Throws ContractError when the
/// record is too short to block (< 64 samples).
TemperatureEstimate measure_temperature(const TrajectoryRecord& record, const ModelParams& params);

}  // namespace beables
