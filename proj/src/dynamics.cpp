#include "beables/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "beables/errors.hpp"
#include "beables/statistics.hpp"

namespace beables {

namespace {

void kick(MatrixConfiguration& s, const std::vector<SymMatrix>& f, double h, double mu) {
  const double scale = h / (2.0 * mu);
  for (std::size_t a = 0; a < s.V.size(); ++a) s.V[a].axpy(scale, f[a]);
}

void drift(MatrixConfiguration& s, double h) {
  for (std::size_t a = 0; a < s.X.size(); ++a) s.X[a].axpy(h, s.V[a]);
}

// Exact Ornstein–Uhlenbeck update of the velocities over dt.
void thermal(MatrixConfiguration& s, const ModelParams& params, double dt, double gamma,
             double temperature, NoiseTarget target, bool project_trace, Rng& rng) {
  const double c1 = std::exp(-gamma * dt);
  const double var = std::max(0.0, (1.0 - c1 * c1) * temperature);
  const double sd_diag = std::sqrt(var / (2.0 * params.mu));
  const double sd_off = std::sqrt(var / (4.0 * params.mu));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = params.N;
  for (auto& v : s.V) {
    const double old_trace = v.trace();
    auto p = v.packed();
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) {
      if (target == NoiseTarget::all) {
        p[k] = c1 * p[k] + (var > 0.0 ? sd_diag * gauss(rng) : 0.0);
      }
      ++k;
      for (int j = i + 1; j < n; ++j, ++k) p[k] = c1 * p[k] + (var > 0.0 ? sd_off * gauss(rng) : 0.0);
    }
    if (project_trace) v.add_identity((old_trace - v.trace()) / n);
  }
}

bool all_finite(const std::vector<SymMatrix>& ms) {
  for (const auto& m : ms)
    for (double x : m.packed())
      if (!std::isfinite(x)) return false;
  return true;
}

const char* mode_name(IntegratorMode m) {
  return m == IntegratorMode::langevin ? "langevin" : "microcanonical";
}

}  // namespace

void IntegratorConfig::validate() const {
  if (!(dt > 0.0)) throw ContractError("IntegratorConfig: dt must be > 0");
  if (steps < 0) throw ContractError("IntegratorConfig: steps must be >= 0");
  if (record_every < 1) throw ContractError("IntegratorConfig: record_every must be >= 1");
  if (frame_every < 0) throw ContractError("IntegratorConfig: frame_every must be >= 0");
  if (mode == IntegratorMode::langevin) {
    if (!(gamma > 0.0)) throw ContractError("IntegratorConfig: langevin mode requires gamma > 0");
    if (!(temperature >= 0.0)) throw ContractError("IntegratorConfig: temperature must be >= 0");
  }
}

int kinetic_dof(const ModelParams& params, const IntegratorConfig& integrator) {
  int dof = params.dof();
  if (integrator.project_trace) dof -= params.d;
  return dof;
}

MatrixConfiguration step_leapfrog(const MatrixConfiguration& config, const ModelParams& params,
                                  double dt) {
  if (!(dt > 0.0)) throw ContractError("step_leapfrog: dt must be > 0");
  MatrixConfiguration s = config;
  kick(s, force(s, params), 0.5 * dt, params.mu);
  drift(s, dt);
  kick(s, force(s, params), 0.5 * dt, params.mu);
  s.time += dt;
  return s;
}

MatrixConfiguration step_langevin(const MatrixConfiguration& config, const ModelParams& params,
                                  double dt, double gamma, double temperature, Rng& rng,
                                  NoiseTarget target, bool project_trace) {
  if (!(dt > 0.0)) throw ContractError("step_langevin: dt must be > 0");
  if (!(gamma > 0.0)) throw ContractError("step_langevin: gamma must be > 0");
  if (!(temperature >= 0.0)) throw ContractError("step_langevin: temperature must be >= 0");
  MatrixConfiguration s = config;
  kick(s, force(s, params), 0.5 * dt, params.mu);
  drift(s, 0.5 * dt);
  thermal(s, params, dt, gamma, temperature, target, project_trace, rng);
  drift(s, 0.5 * dt);
  kick(s, force(s, params), 0.5 * dt, params.mu);
  s.time += dt;
  return s;
}

Propagator::Propagator(MatrixConfiguration start, ModelParams params, IntegratorConfig integrator)
    : state_(std::move(start)),
      params_(params),
      integrator_(integrator),
      rng_(integrator.seed) {
  params_.validate();
  integrator_.validate();
  check_shapes(state_, params_);
  force_ = force(state_, params_);
}

void Propagator::advance() {
  const double dt = integrator_.dt;
  kick(state_, force_, 0.5 * dt, params_.mu);
  if (integrator_.mode == IntegratorMode::microcanonical) {
    drift(state_, dt);
  } else {
    drift(state_, 0.5 * dt);
    thermal(state_, params_, dt, integrator_.gamma, integrator_.temperature,
            integrator_.noise_target, integrator_.project_trace, rng_);
    drift(state_, 0.5 * dt);
  }
  force_ = force(state_, params_);
  kick(state_, force_, 0.5 * dt, params_.mu);
  state_.time += dt;
  ++step_;
}

void Propagator::check_finite() const {
  if (all_finite(state_.X) && all_finite(state_.V)) return;
  double e = std::numeric_limits<double>::quiet_NaN();
  try {
    e = kinetic_energy(state_, params_) + potential_energy(state_, params_);
  } catch (...) {
  }
  throw NumericAbort("non-finite matrix entry at step " + std::to_string(step_) +
                         " (energy " + std::to_string(e) + ")",
                     step_, e);
}

nlohmann::json to_json(const ModelParams& p) {
  return {{"d", p.d},
          {"N", p.N},
          {"mu", p.mu},
          {"omega", p.omega},
          {"kappa", p.kappa},
          {"pair_sum", p.pair_sum == PairSum::ordered_pairs ? "ordered_pairs" : "unordered_pairs"}};
}

nlohmann::json to_json(const IntegratorConfig& c) {
  return {{"mode", mode_name(c.mode)},
          {"dt", c.dt},
          {"steps", c.steps},
          {"gamma", c.gamma},
          {"temperature", c.temperature},
          {"seed", c.seed},
          {"record_every", c.record_every},
          {"frame_every", c.frame_every},
          {"noise_target", c.noise_target == NoiseTarget::all ? "all" : "off_diagonal"},
          {"project_trace", c.project_trace}};
}

TrajectoryRecord run(const MatrixConfiguration& config, const ModelParams& params,
                     const IntegratorConfig& integrator) {
  Propagator prop(config, params, integrator);
  TrajectoryRecord rec;
  rec.kinetic_dof = kinetic_dof(params, integrator);
  const bool noisy_trace = integrator.mode == IntegratorMode::langevin &&
                           integrator.noise_target == NoiseTarget::all &&
                           !integrator.project_trace;
  rec.com_conserved = !noisy_trace && params.kappa == 0.0;
  rec.manifest = {{"model", to_json(params)},
                  {"integrator", to_json(integrator)},
                  {"conventions",
                   {{"potential_sign", "commuting_minima"},
                    {"kinetic_masses", "diagonal 2mu, off-diagonal 4mu"},
                    {"pair_sum", to_json(params)["pair_sum"]}}},
                  {"com_conserved", rec.com_conserved},
                  {"kinetic_dof", rec.kinetic_dof}};

  const Eigen::MatrixXd* warm = nullptr;
  auto record = [&] {
    const auto& s = prop.state();
    const EnergyPair e{kinetic_energy(s, params), potential_energy(s, params)};
    if (!std::isfinite(e.total()))
      throw NumericAbort("non-finite energy at step " + std::to_string(prop.step_index()),
                         prop.step_index(), e.total());
    const std::size_t idx = rec.times.size();
    rec.steps.push_back(prop.step_index());
    rec.times.push_back(s.time);
    rec.spectra.push_back(eigenvalues(s));
    rec.energies.push_back(e);
    rec.com_momenta.push_back(com_momentum(s, params));
    if (integrator.frame_every > 0 && idx % static_cast<std::size_t>(integrator.frame_every) == 0) {
      rec.frames.push_back(joint_diagonalize(s, 100, 1e-12, warm));
      rec.frame_records.push_back(idx);
      warm = &rec.frames.back().frame;
    }
  };

  // frames may reallocate; keep the warm-start pointer valid
  if (integrator.frame_every > 0)
    rec.frames.reserve(static_cast<std::size_t>(integrator.steps / integrator.record_every) /
                           static_cast<std::size_t>(integrator.frame_every) + 2);
  record();
  for (std::int64_t k = 0; k < integrator.steps; ++k) {
    prop.advance();
    prop.check_finite();
    if (prop.step_index() % integrator.record_every == 0) record();
  }
  rec.final_state = prop.state();
  return rec;
}

EquilibrationResult equilibrate(const MatrixConfiguration& config, const ModelParams& params,
                                const IntegratorConfig& integrator, double tol,
                                const EquilibrationOptions& options) {
  if (integrator.mode != IntegratorMode::langevin)
    throw ContractError("equilibrate: langevin mode required");
  EquilibrationResult res{config, {}};
  if (std::isinf(tol)) {
    res.diagnostics.converged = true;
    return res;
  }
  Propagator prop(config, params, integrator);
  const double dof = kinetic_dof(params, integrator);
  std::vector<double> kin, pot;
  auto advance = [&](std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
      prop.advance();
      prop.check_finite();
      kin.push_back(kinetic_energy(prop.state(), params));
      pot.push_back(potential_energy(prop.state(), params));
    }
  };

  auto& dg = res.diagnostics;
  while (true) {
    const auto have = static_cast<std::int64_t>(kin.size());
    std::int64_t window = options.min_window;
    if (have >= options.min_window) {
      const std::span<const double> recent(pot.data() + have / 2, pot.size() - have / 2);
      dg.tau_potential = stats::integrated_autocorr_time(recent);
      window = std::max<std::int64_t>(window, static_cast<std::int64_t>(std::ceil(10.0 * dg.tau_potential)));
    }
    if (have >= window) {
      double ksum = 0.0;
      for (std::int64_t i = have - window; i < have; ++i) ksum += kin[i];
      dg.kinetic_temperature = 2.0 * (ksum / static_cast<double>(window)) / dof;
      dg.window_steps = window;
      dg.total_steps = have;
      if (std::abs(dg.kinetic_temperature - integrator.temperature) <= tol) {
        dg.burn_in_steps = have - window;
        dg.converged = true;
        res.config = prop.state();
        return res;
      }
    }
    if (have >= options.max_steps) {
      dg.total_steps = have;
      throw EquilibrationError("equilibrate: kinetic temperature " +
                                   std::to_string(dg.kinetic_temperature) + " not within " +
                                   std::to_string(tol) + " of target after " +
                                   std::to_string(have) + " steps",
                               dg);
    }
    const std::int64_t need = have < window ? window - have : options.check_every;
    advance(std::min(need, options.max_steps - have));
  }
}

TemperatureEstimate measure_temperature(const TrajectoryRecord& record, const ModelParams& params) {
  if (record.energies.size() < 64)
    throw ContractError("measure_temperature: record too short for blocking (" +
                        std::to_string(record.energies.size()) + " < 64 samples)");
  const double dof = record.kinetic_dof > 0 ? record.kinetic_dof : params.dof();
  std::vector<double> t(record.energies.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 2.0 * record.energies[i].kinetic / dof;
  const auto b = stats::blocking(t);
  return {b.mean, b.std_error};
}

}  // namespace beables
