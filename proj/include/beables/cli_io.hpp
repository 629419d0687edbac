#pragma once

// Experiment front-end: strict JSON configuration, subcommands, manifests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "beables/dynamics.hpp"
#include "beables/estimators.hpp"
#include "beables/matrix_core.hpp"
#include "beables/quantum_oracle.hpp"

namespace beables {

inline constexpr const char* kCodeVersion = "beables 0.1.0";
inline constexpr const char* kOutputDirEnv = "BEABLES_OUT_DIR";

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumeric = 2, kExitIo = 3 };

/// Parse or validation failure; the message names the line/column or the
/// offending field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NuConvention { hbar_over_mu, hbar_over_2mu, both };
enum class HbarSource { fixed, emergent };

struct EnsembleConfig {
  int replicas = 1;
  std::optional<std::uint64_t> master_seed;
  double initial_spread = 0.5;
  std::int64_t burn_in_steps = 0;
  int threads = 1;
  bool operator==(const EnsembleConfig&) const = default;
};

struct SweepRequest {
  double t_scaled = 0.1;
  std::vector<int> N_list;
  bool operator==(const SweepRequest&) const = default;
};

struct AnalysisConfig {
  int grid_cells = 64;
  double bandwidth = 0.0;  // 0 = Silverman rule
  double fit_min = 5e-2;
  double fit_max = 5e-1;
  DiffusionMethod method = DiffusionMethod::msd_slope;
  int lag = 1;
  std::optional<SweepRequest> sweep;
  bool operator==(const AnalysisConfig&) const = default;
};

struct OracleConfig {
  int grid_points = 512;
  double length = 40.0;
  Boundary boundary = Boundary::periodic;
  double dt = 1e-3;
  HbarSource hbar_source = HbarSource::fixed;
  double hbar = 1.0;
  double mass = 1.0;
  double sigma0 = 1.0;
  double omega0 = 1.0;
  int walkers = 20000;
  NuConvention nu_convention = NuConvention::both;
  bool operator==(const OracleConfig&) const = default;
};

struct OutputConfig {
  std::string directory = "out";
  std::vector<std::string> formats = {"csv"};
  bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
  ModelParams model;
  IntegratorConfig integrator;
  EnsembleConfig ensemble;
  AnalysisConfig analysis;
  OracleConfig oracle;
  OutputConfig output;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Strict parse: unknown keys are errors, every default is materialized.
/// A run manifest (top-level "manifest_version") is accepted as well and
/// yields the configuration it echoes.
ExperimentConfig parse_config(const std::string& text);
/// Syntax and schema only; validate() must follow once overrides are applied.
ExperimentConfig parse_config_unvalidated(const std::string& text);
nlohmann::json to_json(const ExperimentConfig& config);
/// Semantic checks shared by parse_config and the command entry points.
void validate(const ExperimentConfig& config);

/// ħ the oracle runs with: the configured value, or μ·ν_λ(t) for the model.
double oracle_hbar(const ExperimentConfig& config);

/// Conventions stamped into every manifest and report.
nlohmann::json convention_flags(const ExperimentConfig& config);

struct CommandResult {
  int exit_code = kExitOk;
  std::string message;
  std::vector<std::filesystem::path> written;
};

CommandResult cmd_simulate(const ExperimentConfig& config);
CommandResult cmd_sweep(const ExperimentConfig& config);
CommandResult cmd_oracle(const ExperimentConfig& config);
CommandResult cmd_compare(const ExperimentConfig& config, const std::filesystem::path& trajectory,
                          const std::filesystem::path& oracle);
CommandResult cmd_calibrate(const ExperimentConfig& config);

/// Full command-line entry point (subcommand + flags). Returns the exit code.
int cli_main(int argc, char** argv);

}  // namespace beables
