#include <algorithm>
#include <cmath>

#include "beables/errors.hpp"
#include "beables/quantum_oracle.hpp"
#include "beables/rng.hpp"

namespace beables {

namespace {

std::vector<SplitMix64> walker_streams(std::size_t count, std::uint64_t seed) {
  std::vector<SplitMix64> s;
  s.reserve(count);
  for (std::size_t k = 0; k < count; ++k) s.emplace_back(derive_seed(seed, k, "nelson"));
  return s;
}

void walker_step(NelsonEnsemble& e, const DriftField& drift, const Grid1D& domain, double dt,
                 std::vector<SplitMix64>& streams) {
  const double lo = -0.5 * domain.length;
  const double hi = 0.5 * domain.length;
  const double kick = std::sqrt(2.0 * e.nu * dt);
  for (std::size_t k = 0; k < e.walkers.size(); ++k) {
    double& x = e.walkers[k];
    std::normal_distribution<double> gauss(0.0, 1.0);
    x += drift.at(x) * dt + kick * gauss(streams[k]);
    if (x > hi) {
      x = 2.0 * hi - x;
      ++e.reflections;
    } else if (x < lo) {
      x = 2.0 * lo - x;
      ++e.reflections;
    }
  }
  e.time += dt;
}

void check_ensemble(const NelsonEnsemble& e, double dt) {
  if (!(dt > 0.0)) throw ContractError("nelson_evolve: dt must be > 0");
  if (!(e.nu >= 0.0)) throw ContractError("nelson_evolve: nu must be >= 0");
}

}  // namespace

NelsonEnsemble sample_walkers(const WaveFunction& psi, std::size_t count, double nu,
                              std::uint64_t seed) {
  const auto rho = psi.density();
  const double h = psi.grid.spacing();
  std::vector<double> cdf(rho.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < rho.size(); ++j) {
    acc += rho[j];
    cdf[j] = acc;
  }
  if (!(acc > 0.0)) throw ContractError("sample_walkers: wavefunction vanishes everywhere");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  NelsonEnsemble e;
  e.nu = nu;
  e.time = psi.time;
  e.walkers.resize(count);
  for (auto& x : e.walkers) {
    const double u = unif(rng) * acc;
    const auto j = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    const std::size_t jj = std::min(j, cdf.size() - 1);
    const double below = jj == 0 ? 0.0 : cdf[jj - 1];
    const double frac = rho[jj] > 0.0 ? (u - below) / rho[jj] : 0.5;
    x = psi.grid.x(static_cast<int>(jj)) + (frac - 0.5) * h;
  }
  return e;
}

NelsonEnsemble nelson_evolve(const NelsonEnsemble& ensemble, const DriftProvider& drift,
                             const Grid1D& domain, double dt, std::int64_t steps,
                             std::uint64_t seed) {
  check_ensemble(ensemble, dt);
  NelsonEnsemble e = ensemble;
  auto streams = walker_streams(e.walkers.size(), seed);
  const double t0 = e.time;
  for (std::int64_t s = 0; s < steps; ++s)
    walker_step(e, drift(t0 + static_cast<double>(s) * dt), domain, dt, streams);
  return e;
}

NelsonEnsemble nelson_evolve(const NelsonEnsemble& ensemble, const WaveFunction& psi, double dt,
                             std::int64_t steps, std::uint64_t seed,
                             std::optional<double> osmotic_nu) {
  const DriftField frozen = nelson_drift(psi, osmotic_nu.value_or(ensemble.nu));
  return nelson_evolve(
      ensemble, [&](double) -> const DriftField& { return frozen; }, psi.grid, dt, steps, seed);
}

NelsonEnsemble nelson_evolve_coevolved(const NelsonEnsemble& ensemble, const WaveFunction& psi0,
                                       const std::vector<double>& V, double dt,
                                       std::int64_t steps, std::uint64_t seed,
                                       WaveFunction* psi_final, std::optional<double> osmotic_nu) {
  check_ensemble(ensemble, dt);
  NelsonEnsemble e = ensemble;
  auto streams = walker_streams(e.walkers.size(), seed);
  WaveFunction psi = psi0;
  EvolveOptions opts;
  for (std::int64_t s = 0; s < steps; ++s) {
    const DriftField drift = nelson_drift(psi, osmotic_nu.value_or(e.nu));
    walker_step(e, drift, psi.grid, dt, streams);
    psi = evolve_schrodinger(psi, V, dt, 1, opts);
  }
  if (psi_final) *psi_final = std::move(psi);
  return e;
}

}  // namespace beables
