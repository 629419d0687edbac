#include "beables/quantum_oracle.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include "beables/errors.hpp"

namespace beables {

double Grid1D::spacing() const {
  return boundary == Boundary::periodic ? length / n : length / (n + 1);
}

double Grid1D::x(int j) const {
  const double h = spacing();
  return boundary == Boundary::periodic ? -0.5 * length + j * h : -0.5 * length + (j + 1) * h;
}

std::vector<double> Grid1D::points() const {
  std::vector<double> xs(n);
  for (int j = 0; j < n; ++j) xs[j] = x(j);
  return xs;
}

double WaveFunction::norm() const {
  double s = 0.0;
  for (const auto& z : psi) s += std::norm(z);
  return s * grid.spacing();
}

std::vector<double> WaveFunction::density() const {
  std::vector<double> r(psi.size());
  for (std::size_t j = 0; j < psi.size(); ++j) r[j] = std::norm(psi[j]);
  return r;
}

double WaveFunction::mean_position() const {
  double s = 0.0, w = 0.0;
  for (int j = 0; j < grid.n; ++j) {
    const double p = std::norm(psi[j]);
    s += p * grid.x(j);
    w += p;
  }
  return w > 0.0 ? s / w : 0.0;
}

double WaveFunction::width() const {
  const double m = mean_position();
  double s = 0.0, w = 0.0;
  for (int j = 0; j < grid.n; ++j) {
    const double p = std::norm(psi[j]);
    const double dx = grid.x(j) - m;
    s += p * dx * dx;
    w += p;
  }
  return w > 0.0 ? std::sqrt(s / w) : 0.0;
}

namespace {

void check_grid(const Grid1D& g) {
  if (g.n < 4) throw ContractError("Grid1D: need at least 4 points");
  if (!(g.length > 0.0)) throw ContractError("Grid1D: length must be > 0");
}

void normalize(WaveFunction& w) {
  const double nrm = w.norm();
  if (!(nrm > 0.0)) throw ContractError("wavefunction vanishes everywhere");
  const double s = 1.0 / std::sqrt(nrm);
  for (auto& z : w.psi) z *= s;
}

// In-place complex FFT of a fixed length with its own aligned buffer.
class FftPlan {
 public:
  explicit FftPlan(int n) : n_(n) {
    buf_ = reinterpret_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd_ = fftw_plan_dft_1d(n, buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_1d(n, buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~FftPlan() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(buf_);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  Complex* data() { return reinterpret_cast<Complex*>(buf_); }
  void forward() { fftw_execute(fwd_); }
  /// Unnormalized inverse.
  void backward() { fftw_execute(bwd_); }
  int size() const { return n_; }

  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

 private:
  int n_;
  fftw_complex* buf_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

FftPlan& plan_for(int n) {
  thread_local std::map<int, std::unique_ptr<FftPlan>> cache;
  auto& p = cache[n];
  if (!p) p = std::make_unique<FftPlan>(n);
  return *p;
}

std::vector<double> wavenumbers(const Grid1D& g) {
  std::vector<double> k(g.n);
  const double base = 2.0 * std::numbers::pi / g.length;
  for (int j = 0; j < g.n; ++j) k[j] = base * (j < (g.n + 1) / 2 ? j : j - g.n);
  return k;
}

void monitor_width(const WaveFunction& w) {
  if (w.grid.boundary != Boundary::periodic) return;
  if (4.0 * w.width() >= 0.8 * 0.5 * w.grid.length) {
    std::ostringstream os;
    os << "evolve_schrodinger: packet width " << w.width() << " too large for box L = "
       << w.grid.length << " at t = " << w.time;
    throw std::runtime_error(os.str());
  }
}

void evolve_split_step(WaveFunction& w, const std::vector<double>& V, double dt, std::int64_t steps,
                       bool width_monitor) {
  const int n = w.grid.n;
  const auto k = wavenumbers(w.grid);
  std::vector<Complex> half_v(n), kin(n);
  for (int j = 0; j < n; ++j) {
    half_v[j] = std::polar(1.0, -0.5 * V[j] * dt / w.hbar);
    kin[j] = std::polar(1.0, -w.hbar * k[j] * k[j] * dt / (2.0 * w.mass)) / static_cast<double>(n);
  }
  FftPlan& fft = plan_for(n);
  Complex* buf = fft.data();
  for (std::int64_t s = 0; s < steps; ++s) {
    for (int j = 0; j < n; ++j) buf[j] = w.psi[j] * half_v[j];
    fft.forward();
    for (int j = 0; j < n; ++j) buf[j] *= kin[j];
    fft.backward();
    for (int j = 0; j < n; ++j) w.psi[j] = buf[j] * half_v[j];
    w.time += dt;
    if (width_monitor && (s + 1) % 100 == 0) monitor_width(w);
  }
  if (width_monitor) monitor_width(w);
}

void evolve_crank_nicolson(WaveFunction& w, const std::vector<double>& V, double dt,
                           std::int64_t steps) {
  const int n = w.grid.n;
  const double h = w.grid.spacing();
  const Complex I(0.0, 1.0);
  const double kin = w.hbar * w.hbar / (2.0 * w.mass * h * h);
  const Complex off = I * dt / (2.0 * w.hbar) * (-kin);  // same on both off-diagonals
  std::vector<Complex> diag_a(n), diag_b(n);
  for (int j = 0; j < n; ++j) {
    const Complex hjj = 2.0 * kin + V[j];
    diag_a[j] = 1.0 + I * dt / (2.0 * w.hbar) * hjj;
    diag_b[j] = 1.0 - I * dt / (2.0 * w.hbar) * hjj;
  }
  // Thomas factorization of A (constant in time).
  std::vector<Complex> cprime(n), denom(n);
  denom[0] = diag_a[0];
  cprime[0] = off / denom[0];
  for (int j = 1; j < n; ++j) {
    denom[j] = diag_a[j] - off * cprime[j - 1];
    cprime[j] = off / denom[j];
  }
  std::vector<Complex> rhs(n);
  for (std::int64_t s = 0; s < steps; ++s) {
    for (int j = 0; j < n; ++j) {
      Complex r = diag_b[j] * w.psi[j];
      if (j > 0) r -= off * w.psi[j - 1];
      if (j + 1 < n) r -= off * w.psi[j + 1];
      rhs[j] = r;
    }
    rhs[0] /= denom[0];
    for (int j = 1; j < n; ++j) rhs[j] = (rhs[j] - off * rhs[j - 1]) / denom[j];
    for (int j = n - 2; j >= 0; --j) rhs[j] -= cprime[j] * rhs[j + 1];
    w.psi = rhs;
    w.time += dt;
  }
}

}  // namespace

WaveFunction gaussian_packet(const Grid1D& grid, double sigma, double x0, double p0, double hbar,
                             double mass) {
  check_grid(grid);
  if (!(sigma > 0.0)) throw ContractError("gaussian_packet: sigma must be > 0");
  WaveFunction w{grid, std::vector<Complex>(grid.n), hbar, mass, 0.0};
  for (int j = 0; j < grid.n; ++j) {
    const double dx = grid.x(j) - x0;
    w.psi[j] = std::exp(-dx * dx / (4.0 * sigma * sigma)) * std::polar(1.0, p0 * grid.x(j) / hbar);
  }
  normalize(w);
  return w;
}

WaveFunction harmonic_eigenstate(const Grid1D& grid, int level, double omega0, double hbar,
                                 double mass) {
  check_grid(grid);
  if (level < 0 || level > 20) throw ContractError("harmonic_eigenstate: level must be in [0, 20]");
  const double scale = std::sqrt(mass * omega0 / hbar);
  WaveFunction w{grid, std::vector<Complex>(grid.n), hbar, mass, 0.0};
  for (int j = 0; j < grid.n; ++j) {
    const double xi = scale * grid.x(j);
    double prev = 0.0;
    double cur = std::pow(std::numbers::pi, -0.25) * std::exp(-0.5 * xi * xi);
    for (int k = 0; k < level; ++k) {
      const double next = std::sqrt(2.0 / (k + 1)) * xi * cur - std::sqrt(static_cast<double>(k) / (k + 1)) * prev;
      prev = cur;
      cur = next;
    }
    w.psi[j] = cur;
  }
  normalize(w);
  return w;
}

WaveFunction harmonic_ground_state(const Grid1D& grid, double omega0, double hbar, double mass) {
  return harmonic_eigenstate(grid, 0, omega0, hbar, mass);
}

std::vector<double> harmonic_potential(const Grid1D& grid, double omega0, double mass) {
  std::vector<double> v(grid.n);
  for (int j = 0; j < grid.n; ++j) v[j] = 0.5 * mass * omega0 * omega0 * grid.x(j) * grid.x(j);
  return v;
}

WaveFunction evolve_schrodinger(const WaveFunction& psi, const std::vector<double>& V, double dt,
                                std::int64_t steps, const EvolveOptions& options) {
  check_grid(psi.grid);
  if (!(dt > 0.0)) throw ContractError("evolve_schrodinger: dt must be > 0");
  if (steps < 0) throw ContractError("evolve_schrodinger: steps must be >= 0");
  if (V.size() != static_cast<std::size_t>(psi.grid.n) || psi.psi.size() != V.size())
    throw ContractError("evolve_schrodinger: potential does not match grid");

  const double h = psi.grid.spacing();
  double vmax = 0.0;
  for (double v : V) vmax = std::max(vmax, std::abs(v));
  const double kmax2 = psi.grid.boundary == Boundary::periodic
                           ? std::pow(std::numbers::pi / h, 2)
                           : 4.0 / (h * h);
  const double emax = psi.hbar * psi.hbar * kmax2 / (2.0 * psi.mass) + vmax;
  const double ratio = dt * emax / psi.hbar;
  if (options.report) {
    options.report->accuracy_ratio = ratio;
    if (ratio > 0.1) {
      std::ostringstream os;
      os << "dt*E_max/hbar = " << ratio << " exceeds 0.1; high-momentum components are inaccurate";
      options.report->warnings.push_back(os.str());
    }
  }

  WaveFunction w = psi;
  if (w.grid.boundary == Boundary::periodic)
    evolve_split_step(w, V, dt, steps, options.width_monitor);
  else
    evolve_crank_nicolson(w, V, dt, steps);
  return w;
}

WaveFunction build_wavefunction(const MadelungPair& m, double mass) {
  check_grid(m.grid);
  if (m.rho.size() != static_cast<std::size_t>(m.grid.n) || m.S.size() != m.rho.size())
    throw ContractError("build_wavefunction: fields do not match grid");
  WaveFunction w{m.grid, std::vector<Complex>(m.grid.n), m.hbar, mass, 0.0};
  for (int j = 0; j < m.grid.n; ++j) {
    if (m.rho[j] < 0.0) throw ContractError("build_wavefunction: negative density");
    w.psi[j] = std::sqrt(m.rho[j]) * std::polar(1.0, m.S[j] / m.hbar);
  }
  normalize(w);
  return w;
}

MadelungPair madelung_decompose(const WaveFunction& psi, double floor) {
  const int n = psi.grid.n;
  MadelungPair m{psi.grid, psi.density(), std::vector<double>(n, 0.0), std::vector<bool>(n, false),
                 psi.hbar};
  const auto jmax = static_cast<int>(std::max_element(m.rho.begin(), m.rho.end()) - m.rho.begin());
  const double rmax = m.rho[jmax];
  if (!(rmax > 0.0)) throw ContractError("madelung_decompose: wavefunction vanishes everywhere");
  for (int j = 0; j < n; ++j) m.valid[j] = m.rho[j] >= floor * rmax;

  auto walk = [&](int step) {
    bool have_ref = false;
    double prev_raw = 0.0, prev_cont = 0.0;
    for (int j = jmax; j >= 0 && j < n; j += step) {
      if (!m.valid[j]) {
        have_ref = false;
        continue;
      }
      const double raw = std::arg(psi.psi[j]);
      double cont = raw;
      if (have_ref) {
        double delta = raw - prev_raw;
        delta -= 2.0 * std::numbers::pi * std::round(delta / (2.0 * std::numbers::pi));
        cont = prev_cont + delta;
      }
      m.S[j] = psi.hbar * cont;
      prev_raw = raw;
      prev_cont = cont;
      have_ref = true;
    }
  };
  walk(+1);
  walk(-1);
  return m;
}

WaveFunction phase_renormalize(const WaveFunction& psi, double E, double t_now) {
  WaveFunction w = psi;
  const Complex phase = std::polar(1.0, E * t_now / psi.hbar);
  for (auto& z : w.psi) z *= phase;
  return w;
}

double DriftField::at(double x) const {
  const int n = grid.n;
  const double h = grid.spacing();
  const double f = (x - grid.x(0)) / h;
  const double fl = std::floor(f);
  int j0 = static_cast<int>(fl);
  const double frac = f - fl;
  auto value = [&](int j) -> double {
    if (grid.boundary == Boundary::periodic) {
      j = ((j % n) + n) % n;
    } else if (j < 0 || j >= n) {
      return 0.0;
    }
    return valid[j] ? b[j] : 0.0;
  };
  return (1.0 - frac) * value(j0) + frac * value(j0 + 1);
}

DriftField nelson_drift(const WaveFunction& psi, double nu, double floor) {
  const int n = psi.grid.n;
  const double h = psi.grid.spacing();
  std::vector<Complex> dpsi(n);
  if (psi.grid.boundary == Boundary::periodic) {
    FftPlan& fft = plan_for(n);
    Complex* buf = fft.data();
    std::copy(psi.psi.begin(), psi.psi.end(), buf);
    fft.forward();
    const auto k = wavenumbers(psi.grid);
    for (int j = 0; j < n; ++j) buf[j] *= Complex(0.0, k[j]) / static_cast<double>(n);
    if (n % 2 == 0) buf[n / 2] = 0.0;  // Nyquist mode has no odd derivative
    fft.backward();
    std::copy(buf, buf + n, dpsi.begin());
  } else {
    for (int j = 0; j < n; ++j) {
      const Complex r = j + 1 < n ? psi.psi[j + 1] : Complex(0.0);
      const Complex l = j > 0 ? psi.psi[j - 1] : Complex(0.0);
      dpsi[j] = (r - l) / (2.0 * h);
    }
  }
  const auto rho = psi.density();
  const double rmax = *std::max_element(rho.begin(), rho.end());
  DriftField f{psi.grid, std::vector<double>(n, 0.0), std::vector<bool>(n, false)};
  for (int j = 0; j < n; ++j) {
    if (rho[j] < floor * rmax || rho[j] <= 0.0) continue;
    const Complex cz = std::conj(psi.psi[j]) * dpsi[j];
    const double v = psi.hbar / psi.mass * cz.imag() / rho[j];
    const double u = nu * 2.0 * cz.real() / rho[j];
    f.b[j] = v + u;
    f.valid[j] = true;
  }
  return f;
}

DriftField nelson_drift(const MadelungPair& m, double nu, double mass) {
  const int n = m.grid.n;
  const double h = m.grid.spacing();
  DriftField f{m.grid, std::vector<double>(n, 0.0), std::vector<bool>(n, false)};
  for (int j = 1; j + 1 < n; ++j) {
    if (!m.valid[j] || !m.valid[j - 1] || !m.valid[j + 1]) continue;
    if (m.rho[j - 1] <= 0.0 || m.rho[j + 1] <= 0.0) continue;
    const double dS = (m.S[j + 1] - m.S[j - 1]) / (2.0 * h);
    const double dlr = (std::log(m.rho[j + 1]) - std::log(m.rho[j - 1])) / (2.0 * h);
    f.b[j] = dS / mass + nu * dlr;
    f.valid[j] = true;
  }
  return f;
}

std::vector<double> coarsen_density(const std::vector<double>& rho, int factor) {
  if (factor < 1) throw ContractError("coarsen_density: factor must be >= 1");
  std::vector<double> out(rho.size() / factor, 0.0);
  for (std::size_t b = 0; b < out.size(); ++b) {
    for (int k = 0; k < factor; ++k) out[b] += rho[b * factor + k];
    out[b] /= factor;
  }
  return out;
}

std::vector<double> histogram_density(const std::vector<double>& samples, const Grid1D& grid,
                                      int coarsen) {
  if (coarsen < 1) throw ContractError("histogram_density: coarsen must be >= 1");
  if (samples.empty()) throw ContractError("histogram_density: no samples");
  const double h = grid.spacing();
  const std::size_t bins = static_cast<std::size_t>(grid.n / coarsen);
  const double lo = grid.x(0) - 0.5 * h;
  const double width = coarsen * h;
  std::vector<double> counts(bins, 0.0);
  for (double x : samples) {
    const double f = (x - lo) / width;
    if (f < 0.0) continue;
    const auto b = static_cast<std::size_t>(f);
    if (b < bins) counts[b] += 1.0;
  }
  const double scale = 1.0 / (static_cast<double>(samples.size()) * width);
  for (double& c : counts) c *= scale;
  return counts;
}

double compare_densities(const std::vector<double>& rho_a, const std::vector<double>& rho_b,
                         double spacing, DensityMetric metric) {
  if (rho_a.size() != rho_b.size()) throw ContractError("compare_densities: grid mismatch");
  if (!(spacing > 0.0)) throw ContractError("compare_densities: spacing must be > 0");
  double out = 0.0;
  if (metric == DensityMetric::L1) {
    for (std::size_t j = 0; j < rho_a.size(); ++j) out += std::abs(rho_a[j] - rho_b[j]);
    return out * spacing;
  }
  double ca = 0.0, cb = 0.0;
  for (std::size_t j = 0; j < rho_a.size(); ++j) {
    ca += rho_a[j] * spacing;
    cb += rho_b[j] * spacing;
    out = std::max(out, std::abs(ca - cb));
  }
  return out;
}

}  // namespace beables
