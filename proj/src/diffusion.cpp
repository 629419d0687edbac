#include <algorithm>
#include <cmath>

#include "beables/errors.hpp"
#include "beables/estimators.hpp"
#include "beables/rng.hpp"
#include "beables/statistics.hpp"

namespace beables {

namespace {

// msd[a][l] for one resampling unit, lags lag_lo..lag_hi.
using UnitMsd = std::vector<std::vector<double>>;

double series_msd(const std::vector<double>& x, int lag, bool remove_drift) {
  const std::size_t n = x.size() - static_cast<std::size_t>(lag);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dx = x[t + lag] - x[t];
    s1 += dx;
    s2 += dx * dx;
  }
  const double m1 = s1 / static_cast<double>(n);
  const double m2 = s2 / static_cast<double>(n);
  return remove_drift ? m2 - m1 * m1 : m2;
}

}  // namespace

DiffusionEstimate estimate_diffusion(const std::vector<EigenTrajectory>& trajectories,
                                     double fit_min, double fit_max, DiffusionMethod method,
                                     const DiffusionOptions& options) {
  if (trajectories.empty()) throw ContractError("estimate_diffusion: empty ensemble");
  const auto& first = trajectories.front();
  if (first.frames() < 2) throw ContractError("estimate_diffusion: need >= 2 frames");
  const double dt = first.times[1] - first.times[0];
  if (!(dt > 0.0)) throw ContractError("estimate_diffusion: non-increasing times");
  const int dims = first.dims();
  const int frames = static_cast<int>(first.frames());

  int lag_lo = 1, lag_hi = 1;
  if (method == DiffusionMethod::msd_slope) {
    lag_lo = std::max(1, static_cast<int>(std::ceil(fit_min / dt - 1e-9)));
    lag_hi = static_cast<int>(std::floor(fit_max / dt + 1e-9));
    if (lag_hi - lag_lo + 1 < 5)
      throw ContractError("estimate_diffusion: fit window too narrow (< 5 recorded lags)");
    if (lag_hi >= frames) throw ContractError("estimate_diffusion: fit window exceeds recorded time");
  }
  const int nlags = lag_hi - lag_lo + 1;

  std::vector<UnitMsd> units;
  const bool per_particle_units = trajectories.size() == 1;
  for (const auto& t : trajectories) {
    if (t.dims() != dims || static_cast<int>(t.frames()) != frames)
      throw ContractError("estimate_diffusion: replicas differ in shape");
    const int np = t.particles();
    const bool com = options.remove_com && np > 1;
    UnitMsd replica_sum(dims, std::vector<double>(nlags, 0.0));
    std::vector<std::vector<double>> centre(dims, std::vector<double>(frames, 0.0));
    if (com)
      for (int a = 0; a < dims; ++a)
        for (int f = 0; f < frames; ++f) {
          for (int j = 0; j < np; ++j) centre[a][f] += t.positions[f][j](a);
          centre[a][f] /= np;
        }
    std::vector<double> x(frames);
    for (int i = 0; i < np; ++i) {
      UnitMsd particle(dims, std::vector<double>(nlags, 0.0));
      for (int a = 0; a < dims; ++a) {
        for (int f = 0; f < frames; ++f) {
          x[f] = t.positions[f][i](a) - centre[a][f];
        }
        for (int l = 0; l < nlags; ++l) {
          const double m = series_msd(x, lag_lo + l, options.remove_drift);
          particle[a][l] = m;
          replica_sum[a][l] += m / np;
        }
      }
      if (per_particle_units) units.push_back(std::move(particle));
    }
    if (!per_particle_units) units.push_back(std::move(replica_sum));
  }

  std::vector<double> taus(nlags);
  for (int l = 0; l < nlags; ++l) taus[l] = (lag_lo + l) * dt;

  // ν per direction and overall from the mean MSD over the chosen units.
  auto evaluate = [&](const std::vector<std::size_t>& pick, std::vector<double>* per_dir) {
    std::vector<double> all(nlags, 0.0);
    double total = 0.0;
    for (int a = 0; a < dims; ++a) {
      std::vector<double> m(nlags, 0.0);
      for (auto u : pick)
        for (int l = 0; l < nlags; ++l) m[l] += units[u][a][l];
      for (double& v : m) v /= static_cast<double>(pick.size());
      double nu_a;
      if (method == DiffusionMethod::msd_slope) {
        nu_a = 0.5 * stats::fit_line(taus, m).slope;
      } else {
        nu_a = m[0] / (2.0 * dt);
      }
      if (per_dir) per_dir->push_back(nu_a);
      total += nu_a;
    }
    return total / dims;
  };

  std::vector<std::size_t> everyone(units.size());
  for (std::size_t u = 0; u < units.size(); ++u) everyone[u] = u;
  DiffusionEstimate est;
  est.method = method;
  est.fit_min = lag_lo * dt;
  est.fit_max = lag_hi * dt;
  est.nu_hat = std::max(0.0, evaluate(everyone, &est.per_direction));
  for (double& v : est.per_direction) v = std::max(0.0, v);

  if (units.size() >= 2 && options.bootstrap_samples > 1) {
    Rng rng(options.bootstrap_seed);
    std::uniform_int_distribution<std::size_t> pick_unit(0, units.size() - 1);
    std::vector<double> boot;
    boot.reserve(options.bootstrap_samples);
    std::vector<std::size_t> pick(units.size());
    for (int b = 0; b < options.bootstrap_samples; ++b) {
      for (auto& p : pick) p = pick_unit(rng);
      boot.push_back(evaluate(pick, nullptr));
    }
    est.std_error = std::sqrt(stats::variance(boot));
  }
  return est;
}

}  // namespace beables
