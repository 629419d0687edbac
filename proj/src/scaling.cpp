#include <atomic>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "beables/errors.hpp"
#include "beables/estimators.hpp"

namespace beables {

namespace {

// Frames between pooled velocity slices.
constexpr std::size_t kSliceStride = 10;

void require_multi_direction(const ModelParams& p, const char* what) {
  if (p.d < 2)
    throw DomainError(std::string(what) + ": scaling formulas require d >= 2 (singular at d = 1)");
}

}  // namespace

double scaled_temperature(const ModelParams& params, double T, int N) {
  require_multi_direction(params, "scaled_temperature");
  return static_cast<double>(N) * T / (8.0 * (params.d - 1) * params.energy_scale());
}

double temperature_for(const ModelParams& params, double t_scaled, int N) {
  require_multi_direction(params, "temperature_for");
  return 8.0 * (params.d - 1) * params.energy_scale() * t_scaled / static_cast<double>(N);
}

double predicted_diffusion(const ModelParams& params, double t_scaled) {
  require_multi_direction(params, "predicted_diffusion");
  if (!(t_scaled >= 0.0)) throw DomainError("predicted_diffusion: t must be >= 0");
  const double dm1 = params.d - 1;
  return params.omega * params.d * std::pow(t_scaled, 1.5) / (4.0 * std::pow(dm1, 1.5));
}

double emergent_hbar(const ModelParams& params, double nu_lambda) {
  if (!(nu_lambda >= 0.0)) throw DomainError("emergent_hbar: nu must be >= 0");
  return params.mu * nu_lambda;
}

EigenTrajectory sweep_replica(const ModelParams& params, double temperature,
                              const SweepSettings& settings, int replica) {
  const std::string tag = "sweep/N=" + std::to_string(params.N) + "/";
  const auto r = static_cast<std::uint64_t>(replica);
  const auto start = random_config(params, settings.initial_spread,
                                   derive_seed(settings.master_seed, r, tag + "init"));

  IntegratorConfig burn;
  burn.mode = IntegratorMode::langevin;
  burn.dt = settings.dt;
  burn.gamma = settings.gamma;
  burn.temperature = temperature;
  burn.seed = derive_seed(settings.master_seed, r, tag + "burn");
  EquilibrationOptions eq;
  eq.min_window = std::max<std::int64_t>(1, settings.burn_in_steps);
  eq.max_steps = std::max<std::int64_t>(20 * settings.burn_in_steps, 10000);
  const auto equilibrated = equilibrate(start, params, burn, 0.1 * temperature, eq);

  IntegratorConfig prod = burn;
  prod.steps = settings.production_steps;
  prod.seed = derive_seed(settings.master_seed, r, tag + "production");
  prod.record_every = settings.record_every;
  prod.frame_every = 1;
  // Production time starts at zero so replicas share a clock.
  MatrixConfiguration production_start = equilibrated.config;
  production_start.time = 0.0;
  auto rec = run(production_start, params, prod);
  return track_particles(rec.frames, rec.times, replica);
}

std::vector<ScalingPoint> scaling_sweep(const ModelParams& base_params, double t_scaled,
                                        const std::vector<int>& N_list,
                                        const SweepSettings& settings) {
  require_multi_direction(base_params, "scaling_sweep");
  if (settings.replicas < 1) throw ContractError("scaling_sweep: need >= 1 replica");
  for (int n : N_list)
    if (n < 2) throw ContractError("scaling_sweep: every N must be >= 2");

  std::vector<ScalingPoint> points;
  for (int n : N_list) {
    ModelParams params = base_params;
    params.N = n;
    params.validate();
    const double T = temperature_for(params, t_scaled, n);

    std::vector<EigenTrajectory> trajs(settings.replicas);
    std::vector<std::exception_ptr> errors(settings.replicas);
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int r = next++; r < settings.replicas; r = next++) {
        try {
          trajs[r] = sweep_replica(params, T, settings, r);
        } catch (...) {
          errors[r] = std::current_exception();
        }
      }
    };
    const int nthreads = std::max(1, std::min(settings.threads, settings.replicas));
    if (nthreads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

    DiffusionOptions opts;
    opts.bootstrap_seed = derive_seed(settings.master_seed, static_cast<std::uint64_t>(n), "sweep/bootstrap");
    const auto est = estimate_diffusion(trajs, settings.fit_min, settings.fit_max, settings.method, opts);

    ScalingPoint pt;
    pt.N = n;
    pt.T = T;
    pt.t_scaled = scaled_temperature(params, T, n);
    pt.nu_hat = est.nu_hat;
    pt.nu_stderr = est.std_error;
    pt.nu_pred = predicted_diffusion(params, pt.t_scaled);
    pt.hbar_emergent = emergent_hbar(params, est.nu_hat);
    pt.replicas = settings.replicas;

    double jd = 0.0;
    std::size_t count = 0;
    for (const auto& t : trajs)
      for (double r : t.residuals) {
        jd += r;
        ++count;
      }
    pt.jd_residual = count ? jd / static_cast<double>(count) : 0.0;

    // Current velocity on the (λ¹, λ²) plane. The production record is
    // stationary, so three-frame slices from across it are pooled as extra
    // replicas on a common clock.
    std::vector<EigenTrajectory> slices;
    for (const auto& t : trajs) {
      for (std::size_t k = 1; k + 1 < t.frames(); k += kSliceStride) {
        EigenTrajectory s;
        s.times = {0.0, t.times[k] - t.times[k - 1], t.times[k + 1] - t.times[k - 1]};
        s.positions = {t.positions[k - 1], t.positions[k], t.positions[k + 1]};
        s.residuals = {t.residuals[k - 1], t.residuals[k], t.residuals[k + 1]};
        slices.push_back(std::move(s));
      }
    }
    if (!slices.empty()) {
      const double tq = slices.front().times[1];
      const auto pts = ensemble_points(slices, tq, Grid::square(0.0, 1.0, 1));
      const double lo = std::min(pts.col(0).minCoeff(), pts.col(1).minCoeff());
      const double hi = std::max(pts.col(0).maxCoeff(), pts.col(1).maxCoeff());
      if (hi > lo) {
        const Grid grid = Grid::square(lo, hi, settings.grid_cells);
        const auto v = estimate_current_velocity(slices, tq, grid, silverman_bandwidth(pts), 1);
        pt.irrotationality = irrotationality_residual(v);
      }
    }
    points.push_back(pt);
  }
  return points;
}

}  // namespace beables
