#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "beables/calibration.hpp"
#include "beables/errors.hpp"
#include "beables/estimators.hpp"
#include "beables/rng.hpp"

using namespace beables;

namespace {

ModelParams params(int d, int N, double mu = 1.0, double omega = 1.0) {
  ModelParams p;
  p.d = d;
  p.N = N;
  p.mu = mu;
  p.omega = omega;
  return p;
}

ParticleFrame frame_of(std::vector<Eigen::VectorXd> pts) {
  ParticleFrame f;
  f.positions = std::move(pts);
  return f;
}

Eigen::VectorXd pt(double x) { return Eigen::VectorXd::Constant(1, x); }
Eigen::VectorXd pt(double x, double y) { return Eigen::Vector2d(x, y); }

double total_mass(const FieldEstimate& f) {
  return std::accumulate(f.rho.begin(), f.rho.end(), 0.0) * f.grid.cell_volume();
}

// Single trajectory from a function x(particle, time).
template <class F>
EigenTrajectory synthetic(int particles, int frames, double dt, F&& x) {
  EigenTrajectory t;
  for (int f = 0; f < frames; ++f) {
    const double time = f * dt;
    t.times.push_back(time);
    std::vector<Eigen::VectorXd> row;
    for (int i = 0; i < particles; ++i) row.push_back(x(i, time));
    t.positions.push_back(std::move(row));
    t.residuals.push_back(0.0);
  }
  return t;
}

std::vector<double> normal_pdf_on(const Grid& g, double sigma) {
  std::vector<double> out(g.size());
  for (std::size_t c = 0; c < g.size(); ++c) {
    const double x = g.center(c)(0);
    out[c] = std::exp(-0.5 * x * x / (sigma * sigma)) / (std::sqrt(2.0 * M_PI) * sigma);
  }
  return out;
}

FieldEstimate rho_field(const Grid& g, std::vector<double> rho) {
  FieldEstimate f;
  f.grid = g;
  f.rho = std::move(rho);
  return f;
}

FieldEstimate constant_velocity(const Grid& g, const Eigen::VectorXd& c) {
  FieldEstimate f;
  f.grid = g;
  f.rho.assign(g.size(), 0.0);
  f.v = c.transpose().replicate(static_cast<Eigen::Index>(g.size()), 1);
  f.valid.assign(g.size(), true);
  return f;
}

}  // namespace

TEST_CASE("optimal_assignment solves a hand example") {
  Eigen::Matrix3d cost;
  cost << 4, 1, 3,
          2, 0, 5,
          3, 2, 2;
  CHECK(optimal_assignment(cost) == std::vector<int>{1, 0, 2});
}

TEST_CASE("optimal_assignment matches exhaustive search") {
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 6;
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cost(i, j) = u(rng);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += cost(i, perm[i]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto got = optimal_assignment(cost);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += cost(i, got[i]);
    CHECK(s == doctest::Approx(best).epsilon(1e-12));
    auto sorted = got;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i) CHECK(sorted[i] == i);
  }
  CHECK_THROWS_AS(optimal_assignment(Eigen::MatrixXd::Zero(2, 3)), ContractError);
}

TEST_CASE("track_particles on static frames is the identity") {
  const std::vector<Eigen::VectorXd> pts{pt(0.0, 1.0), pt(1.0, -1.0), pt(2.5, 0.3)};
  const std::vector<ParticleFrame> frames(5, frame_of(pts));
  const std::vector<double> times{0, 1, 2, 3, 4};
  const auto t = track_particles(frames, times);
  REQUIRE(t.frames() == 5);
  for (std::size_t f = 0; f < 5; ++f)
    for (int i = 0; i < 3; ++i) CHECK((t.positions[f][i] - pts[i]).norm() == 0.0);
}

TEST_CASE("track_particles follows continuity through a crossing") {
  // Two particles pass each other in x while staying apart in y, so the
  // lexicographic order of the raw frames swaps half way through.
  std::vector<ParticleFrame> frames;
  std::vector<double> times;
  for (int k = 0; k <= 20; ++k) {
    const double s = -1.0 + 0.1 * k;
    std::vector<Eigen::VectorXd> p{pt(s, 1.0), pt(-s, -1.0)};
    std::sort(p.begin(), p.end(), [](const auto& a, const auto& b) { return a(0) < b(0); });
    frames.push_back(frame_of(p));
    times.push_back(k);
  }
  const auto t = track_particles(frames, times);
  for (std::size_t f = 1; f < t.frames(); ++f)
    for (int i = 0; i < 2; ++i)
      CHECK((t.positions[f][i] - t.positions[f - 1][i]).norm() == doctest::Approx(0.1).epsilon(1e-12));
  // The particle that started on top stays on top.
  const int top = t.positions[0][0](1) > 0.0 ? 0 : 1;
  for (std::size_t f = 0; f < t.frames(); ++f) CHECK(t.positions[f][top](1) == 1.0);
}

TEST_CASE("track_particles never does worse than the identity matching") {
  Rng rng(5);
  std::normal_distribution<double> g;
  for (int n : {5, 80}) {  // exact and greedy regimes
    std::vector<ParticleFrame> frames;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> x(n, Eigen::VectorXd::Zero(2));
    for (auto& p : x) p << 3.0 * g(rng), 3.0 * g(rng);
    for (int k = 0; k < 30; ++k) {
      for (auto& p : x) p += 0.2 * Eigen::Vector2d(g(rng), g(rng));
      auto raw = x;
      std::shuffle(raw.begin(), raw.end(), rng);
      frames.push_back(frame_of(raw));
      times.push_back(k);
    }
    const auto t = track_particles(frames, times);
    for (std::size_t f = 1; f < t.frames(); ++f) {
      double matched = 0.0, identity = 0.0;
      for (int i = 0; i < n; ++i) {
        matched += (t.positions[f][i] - t.positions[f - 1][i]).squaredNorm();
        identity += (frames[f].positions[i] - t.positions[f - 1][i]).squaredNorm();
      }
      CHECK(matched <= identity + 1e-12);
      auto a = t.positions[f], b = frames[f].positions;
      auto lex = [](const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
        return std::lexicographical_compare(p.data(), p.data() + p.size(), q.data(), q.data() + q.size());
      };
      std::sort(a.begin(), a.end(), lex);
      std::sort(b.begin(), b.end(), lex);
      for (int i = 0; i < n; ++i) CHECK((a[i] - b[i]).norm() == 0.0);
    }
  }
}

TEST_CASE("track_particles single particle and contract errors") {
  const std::vector<ParticleFrame> one{frame_of({pt(0.3)}), frame_of({pt(-2.0)})};
  const auto t = track_particles(one, {0.0, 1.0});
  CHECK(t.positions[1][0](0) == -2.0);
  CHECK_THROWS_AS(track_particles(one, {0.0}), ContractError);
  const std::vector<ParticleFrame> bad{frame_of({pt(0.0)}), frame_of({pt(0.0), pt(1.0)})};
  CHECK_THROWS_AS(track_particles(bad, {0.0, 1.0}), ContractError);
}

TEST_CASE("kde of a single point is one normalized bump") {
  const Grid g = Grid::line(-5.0, 5.0, 200);
  const Eigen::MatrixXd p = Eigen::MatrixXd::Constant(50, 1, 0.7);
  const std::vector<double> w(50, 1.0);
  const auto f = kde_density(p, w, g, 0.3);
  CHECK(total_mass(f) == doctest::Approx(1.0).epsilon(1e-12));
  const auto peak = std::max_element(f.rho.begin(), f.rho.end()) - f.rho.begin();
  CHECK(std::abs(g.center(static_cast<std::size_t>(peak))(0) - 0.7) <= g.axes[0].spacing());
  for (double r : f.rho) CHECK(r >= 0.0);
}

TEST_CASE("kde of standard normal samples is within 0.05 in L1") {
  Rng rng(2024);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd p(10000, 1);
  for (Eigen::Index i = 0; i < p.rows(); ++i) p(i, 0) = gauss(rng);
  const Grid g = Grid::line(-6.0, 6.0, 240);
  const double h = silverman_bandwidth(p);
  const std::vector<double> w(p.rows(), 1.0);
  const auto f = kde_density(p, w, g, h);
  const auto truth = normal_pdf_on(g, 1.0);
  double l1 = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c) l1 += std::abs(f.rho[c] - truth[c]) * g.cell_volume();
  CHECK(l1 < 0.05);
  CHECK(total_mass(f) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(f.bandwidth == h);

  const std::vector<double> doubled(p.rows(), 2.0);
  const auto f2 = kde_density(p, doubled, g, h);
  for (std::size_t c = 0; c < g.size(); ++c) CHECK(f2.rho[c] == doctest::Approx(f.rho[c]).epsilon(1e-13));
}

TEST_CASE("kde contract errors") {
  const Grid g = Grid::line(-1.0, 1.0, 10);
  const Eigen::MatrixXd p = Eigen::MatrixXd::Zero(3, 1);
  const std::vector<double> w(3, 1.0);
  CHECK_THROWS_AS(kde_density(p, w, g, 0.0), ContractError);
  CHECK_THROWS_AS(kde_density(Eigen::MatrixXd(0, 1), {}, g, 0.1), ContractError);
  CHECK_THROWS_AS(kde_density(Eigen::MatrixXd::Zero(3, 2), w, g, 0.1), ContractError);
  CHECK_THROWS_AS(estimate_density({}, 0.0, g, 0.1), ContractError);
}

TEST_CASE("estimate_density pools replicas and normalizes in 2D") {
  std::vector<EigenTrajectory> trajs;
  for (int r = 0; r < 3; ++r)
    trajs.push_back(synthetic(4, 3, 0.5, [&](int i, double t) { return pt(0.1 * i - 0.2 * r, t); }));
  const Grid g = Grid::square(-3.0, 3.0, 40);
  const auto f = estimate_density(trajs, 0.5, g, 0.2);
  CHECK(f.n_samples == 12);
  CHECK(total_mass(f) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("current velocity of uniform drift is the drift") {
  const Eigen::Vector2d c(0.3, -1.2);
  auto traj = synthetic(400, 11, 0.1, [&](int i, double t) {
    return Eigen::VectorXd(Eigen::Vector2d(std::sin(1.7 * i), std::cos(2.3 * i)) + c * t);
  });
  const Grid g = Grid::square(-1.5, 1.5, 12);
  const auto v = estimate_current_velocity({traj}, 0.5, g, 0.3, 2, 1.0);
  int valid = 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!v.valid[k]) continue;
    ++valid;
    CHECK(v.v(static_cast<Eigen::Index>(k), 0) == doctest::Approx(c(0)).epsilon(1e-12));
    CHECK(v.v(static_cast<Eigen::Index>(k), 1) == doctest::Approx(c(1)).epsilon(1e-12));
  }
  CHECK(valid > 50);
  CHECK_THROWS_AS(estimate_current_velocity({traj}, 0.0, g, 0.3, 1), ContractError);
  CHECK_THROWS_AS(estimate_current_velocity({traj}, 1.0, g, 0.3, 1), ContractError);
}

TEST_CASE("current velocity of stationary Brownian motion vanishes") {
  // A flat initial density keeps ∇ρ = 0 away from its edges, so v = 0 there.
  // From a point source v would be x/2t instead.
  Rng rng(3);
  std::uniform_real_distribution<double> start(-10.0, 10.0);
  auto paths = brownian_ensemble(1, 20000, 1, 20, 0.01, 0.25, 99);
  auto& t = paths.front();
  for (int i = 0; i < t.particles(); ++i) {
    const double x0 = start(rng);
    for (auto& f : t.positions) f[i](0) += x0;
  }
  const Grid g = Grid::line(-3.0, 3.0, 30);
  const auto v = estimate_current_velocity(paths, 0.1, g, 0.2, 5);
  int valid = 0, inside = 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!v.valid[k]) continue;
    ++valid;
    const auto ki = static_cast<Eigen::Index>(k);
    if (std::abs(v.v(ki, 0)) < 3.0 * v.v_stderr(ki, 0)) ++inside;
  }
  REQUIRE(valid == 30);
  CHECK(inside >= 0.95 * valid);

  // A constant added drift shifts v by exactly that constant.
  const double c = 0.8;
  auto drifted = paths;
  for (std::size_t f = 0; f < drifted[0].frames(); ++f)
    for (auto& p : drifted[0].positions[f]) p(0) += c * drifted[0].times[f];
  const Grid shifted{{Axis{-3.0 + 0.8 * 0.1, 3.0 + 0.8 * 0.1, 30}}, {0}};
  const auto vd = estimate_current_velocity(drifted, 0.1, shifted, 0.2, 5);
  for (std::size_t k = 0; k < g.size(); ++k)
    CHECK(vd.v(static_cast<Eigen::Index>(k), 0) ==
          doctest::Approx(v.v(static_cast<Eigen::Index>(k), 0) + c).epsilon(1e-9));
}

TEST_CASE("current velocity of a relaxing Ornstein-Uhlenbeck flow") {
  // Noiseless relaxation x(t) = x0·e^{−θt}: the symmetric difference gives
  // v = −x·sinh(θτ)/τ, within 1% of −θx at θτ = 0.2.
  const double theta = 2.0, dt = 0.05;
  auto traj = synthetic(500, 9, dt, [&](int i, double t) {
    return pt((-2.0 + 4.0 * i / 499.0) * std::exp(-theta * t));
  });
  const Grid g = Grid::line(-1.0, 1.0, 20);
  const auto v = estimate_current_velocity({traj}, 0.2, g, 0.05, 2);
  const double slope = drift_slope(v, 0.8);
  CHECK(slope == doctest::Approx(-theta).epsilon(0.05));
  CHECK(slope == doctest::Approx(-std::sinh(theta * 2 * dt) / (2 * dt)).epsilon(1e-2));
}

TEST_CASE("forward drift of stationary Ornstein-Uhlenbeck walkers") {
  const double theta = 1.0, tau = 0.1, nu = 0.5;
  const auto ou = ou_ensemble(200000, 1, tau, theta, nu, 17);
  const double sd = std::sqrt(nu / theta);
  const Grid g = Grid::line(-3.0 * sd, 3.0 * sd, 60);
  const auto b = estimate_forward_drift({ou}, 0.0, g, 0.5 * g.axes[0].spacing(), 1);
  const double expected = (std::exp(-theta * tau) - 1.0) / tau;
  CHECK(drift_slope(b, 2.0 * sd) == doctest::Approx(expected).epsilon(0.05));
  // At stationarity the process is reversible, so the current velocity is zero
  // and b equals the osmotic velocity ν∇ln ρ = −θx up to the O(θτ) bias.
  CHECK(expected == doctest::Approx(-theta).epsilon(0.05));
}

TEST_CASE("osmotic velocity examples") {
  const Grid g = Grid::line(-4.0, 4.0, 80);
  const auto flat = estimate_osmotic_velocity(rho_field(g, std::vector<double>(80, 0.125)), 0.7);
  for (std::size_t c = 0; c < g.size(); ++c)
    if (flat.valid[c]) CHECK(flat.u(static_cast<Eigen::Index>(c), 0) == 0.0);

  const double sigma = 0.9, nu = 0.4;
  auto max_err = [&](int cells) {
    const Grid gg = Grid::line(-4.0, 4.0, cells);
    const auto u = estimate_osmotic_velocity(rho_field(gg, normal_pdf_on(gg, sigma)), nu);
    double e = 0.0;
    for (std::size_t c = 0; c < gg.size(); ++c) {
      if (!u.valid[c]) continue;
      const double x = gg.center(c)(0);
      e = std::max(e, std::abs(u.u(static_cast<Eigen::Index>(c), 0) + nu * x / (sigma * sigma)));
    }
    return e;
  };
  // ln ρ is quadratic, so central differences are exact up to rounding.
  CHECK(max_err(80) < 1e-10);
  CHECK(max_err(160) < 1e-10);

  const auto zero = estimate_osmotic_velocity(rho_field(g, normal_pdf_on(g, sigma)), 0.0);
  CHECK(zero.u.cwiseAbs().maxCoeff() == 0.0);

  const Grid tiny = Grid::line(0.0, 1.0, 3);
  CHECK_THROWS_AS(estimate_osmotic_velocity(rho_field(tiny, {0.0, 0.0, 0.0}), 1.0), ContractError);
}

TEST_CASE("osmotic velocity of a non-Gaussian density converges at second order") {
  // ρ ∝ exp(−x⁴/4): ν∇ln ρ = −νx³, and the central-difference error is O(h²).
  const double nu = 0.3;
  auto max_err = [&](int cells) {
    const Grid g = Grid::line(-2.0, 2.0, cells);
    std::vector<double> rho(g.size());
    for (std::size_t c = 0; c < g.size(); ++c) rho[c] = std::exp(-std::pow(g.center(c)(0), 4) / 4.0);
    const auto u = estimate_osmotic_velocity(rho_field(g, rho), nu);
    double e = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c)
      if (u.valid[c]) {
        const double x = g.center(c)(0);
        e = std::max(e, std::abs(u.u(static_cast<Eigen::Index>(c), 0) + nu * x * x * x));
      }
    return e;
  };
  const double ratio = max_err(40) / max_err(80);
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("continuity residual examples") {
  const Grid g = Grid::square(-3.0, 3.0, 40);
  std::vector<double> rho(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) rho[k] = std::exp(-0.5 * g.center(k).squaredNorm());
  const auto still = constant_velocity(g, Eigen::Vector2d::Zero());
  CHECK(continuity_residual(rho_field(g, rho), rho_field(g, rho), still, 0.1) == 0.0);

  const auto res = advected_gaussian_residuals({32, 64, 128});
  CHECK(res[1] < res[0]);
  CHECK(res[2] < res[1]);
  CHECK(std::log(res[1] / res[2]) / std::log(2.0) > 1.8);

  // A translating density with v = 0 leaves ‖∂ρ/∂t‖ behind.
  std::vector<double> moved(g.size());
  for (std::size_t k = 0; k < g.size(); ++k)
    moved[k] = std::exp(-0.5 * (g.center(k) - Eigen::Vector2d(0.05, 0.0)).squaredNorm());
  CHECK(continuity_residual(rho_field(g, rho), rho_field(g, moved), still, 0.1) > 0.1);

  const Grid other = Grid::square(-3.0, 3.0, 20);
  CHECK_THROWS_AS(continuity_residual(rho_field(g, rho), rho_field(g, rho), constant_velocity(other, Eigen::Vector2d::Zero()), 0.1),
                  ContractError);
}

TEST_CASE("continuity residual uses the standard sign") {
  // Density moving right with v = +c balances; v = −c does not.
  const Grid g = Grid::line(-4.0, 4.0, 200);
  const double c = 0.5, dt = 0.01;
  auto at = [&](double shift) {
    std::vector<double> r(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) r[k] = std::exp(-0.5 * std::pow(g.center(k)(0) - shift, 2));
    return rho_field(g, r);
  };
  const auto before = at(-0.5 * c * dt), after = at(0.5 * c * dt);
  const double right = continuity_residual(before, after, constant_velocity(g, pt(c)), dt);
  const double wrong = continuity_residual(before, after, constant_velocity(g, pt(-c)), dt);
  CHECK(right < 1e-2 * wrong);
}

TEST_CASE("irrotationality residual examples") {
  CHECK(gradient_field_residual(64) < 5e-2);
  CHECK(rotational_field_residual(64) > 0.5);

  const Grid g = Grid::square(-3.0, 3.0, 48);
  FieldEstimate f = constant_velocity(g, Eigen::Vector2d::Zero());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto x = g.center(k);
    f.v(static_cast<Eigen::Index>(k), 0) = std::cos(x(0));
    f.v(static_cast<Eigen::Index>(k), 1) = std::cos(x(1));
  }
  CHECK(irrotationality_residual(f) < 5e-2);

  const Grid line = Grid::line(-1.0, 1.0, 10);
  CHECK(irrotationality_residual(constant_velocity(line, pt(1.0))) == 0.0);
}

TEST_CASE("diffusion of synthetic Brownian paths") {
  const auto paths = brownian_ensemble(200, 1, 1, 10000, 0.01, 0.25, 404);
  DiffusionOptions opts;
  opts.remove_com = false;
  const auto msd = estimate_diffusion(paths, 0.05, 0.5, DiffusionMethod::msd_slope, opts);
  CHECK(msd.nu_hat == doctest::Approx(0.25).epsilon(0.02));
  CHECK(msd.std_error > 0.0);
  CHECK(std::abs(msd.nu_hat - 0.25) < 4.0 * msd.std_error);
  CHECK(msd.fit_min == doctest::Approx(0.05));
  CHECK(msd.fit_max == doctest::Approx(0.5));
  const auto qv = estimate_diffusion(paths, 0.05, 0.5, DiffusionMethod::quadratic_variation, opts);
  CHECK(qv.nu_hat == doctest::Approx(0.25).epsilon(0.02));

  // Adding a constant drift leaves ν̂ unchanged within its error bar.
  auto drifted = paths;
  for (auto& t : drifted)
    for (std::size_t f = 0; f < t.frames(); ++f) t.positions[f][0](0) += 0.7 * t.times[f];
  const auto with_drift = estimate_diffusion(drifted, 0.05, 0.5, DiffusionMethod::msd_slope, opts);
  CHECK(std::abs(with_drift.nu_hat - msd.nu_hat) < msd.std_error);

  CHECK_THROWS_AS(estimate_diffusion(paths, 0.05, 0.08, DiffusionMethod::msd_slope, opts), ContractError);
  CHECK_THROWS_AS(estimate_diffusion(paths, 0.05, 1e3, DiffusionMethod::msd_slope, opts), ContractError);
}

TEST_CASE("diffusion of deterministic linear motion is zero after drift removal") {
  auto traj = synthetic(5, 200, 0.01, [](int i, double t) { return pt(i - 0.3 * t, 2.0 * i + 1.1 * t); });
  const auto est = estimate_diffusion({traj}, 0.05, 0.5, DiffusionMethod::msd_slope);
  CHECK(est.nu_hat < 1e-12);
}

TEST_CASE("short-time diffusion of a stationary Ornstein-Uhlenbeck process") {
  const double theta = 0.1, nu = 0.5;
  const auto ou = ou_ensemble(1000, 2000, 0.01, theta, nu, 8);
  DiffusionOptions opts;
  opts.remove_com = false;
  const auto est = estimate_diffusion({ou}, 0.05, 0.2, DiffusionMethod::msd_slope, opts);
  CHECK(est.nu_hat == doctest::Approx(nu).epsilon(0.05));
}

TEST_CASE("scaling formulas") {
  CHECK(scaled_temperature(params(2, 8), 1.0, 8) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(scaled_temperature(params(2, 8), 0.0, 8) == 0.0);
  CHECK(scaled_temperature(params(2, 16), 0.5, 16) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(predicted_diffusion(params(2, 8), 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(predicted_diffusion(params(2, 8), 0.0) == 0.0);
  CHECK(predicted_diffusion(params(3, 8, 1.0, 2.0), 1.0) == doctest::Approx(0.5303300858899106).epsilon(1e-12));
  CHECK(emergent_hbar(params(2, 8, 2.0), 0.5) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(emergent_hbar(params(2, 8), 0.0) == 0.0);
  CHECK(emergent_hbar(params(2, 8), predicted_diffusion(params(2, 8), 1.0)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(temperature_for(params(2, 8), 1.0, 8) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(scaled_temperature(params(1, 8), 1.0, 8), DomainError);
  CHECK_THROWS_AS(predicted_diffusion(params(1, 8), 1.0), DomainError);
  CHECK_THROWS_AS(predicted_diffusion(params(2, 8), -1.0), DomainError);
  CHECK_THROWS_AS(emergent_hbar(params(2, 8), -0.1), DomainError);
}

TEST_CASE("emergent hbar from predicted diffusion matches the closed form") {
  for (int d : {2, 3, 5})
    for (double mu : {0.5, 1.0, 3.0})
      for (double omega : {0.7, 1.0, 2.0})
        for (double t : {0.01, 0.1, 1.0, 4.0}) {
          const auto p = params(d, 8, mu, omega);
          const double closed = mu * omega * std::pow(t, 1.5) * d / (4.0 * std::pow(d - 1.0, 1.5));
          CHECK(emergent_hbar(p, predicted_diffusion(p, t)) == doctest::Approx(closed).epsilon(1e-12));
        }
}

TEST_CASE("scaling sweep smoke run") {
  SweepSettings s;
  s.replicas = 2;
  s.master_seed = 7;
  s.burn_in_steps = 200;
  s.production_steps = 200;
  const auto pts = scaling_sweep(params(2, 4), 0.1, {4, 6}, s);
  REQUIRE(pts.size() == 2);
  for (const auto& p : pts) {
    CHECK(p.t_scaled == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(p.T == doctest::Approx(temperature_for(params(2, p.N), 0.1, p.N)).epsilon(1e-12));
    CHECK(std::isfinite(p.nu_hat));
    CHECK(p.nu_hat >= 0.0);
    CHECK(p.nu_pred == doctest::Approx(predicted_diffusion(params(2, 4), 0.1)).epsilon(1e-12));
    CHECK(p.hbar_emergent == doctest::Approx(p.nu_hat).epsilon(1e-12));
    CHECK(p.replicas == 2);
  }
  CHECK(pts[0].t_scaled == pts[1].t_scaled);
  CHECK(pts[0].N == 4);
  CHECK(pts[1].N == 6);

  const auto again = scaling_sweep(params(2, 4), 0.1, {4, 6}, s);
  CHECK(again[0].nu_hat == pts[0].nu_hat);

  CHECK_THROWS_AS(scaling_sweep(params(1, 4), 0.1, {4}, s), DomainError);
  CHECK_THROWS_AS(scaling_sweep(params(2, 4), 0.1, {1}, s), ContractError);
}

TEST_CASE("estimators are gauge invariant end to end") {
  const auto p = params(2, 5);
  IntegratorConfig ic;
  ic.temperature = 0.2;
  ic.gamma = 1.0;
  ic.seed = 21;
  Propagator prop(random_config(p, 0.5, 3), p, ic);
  Rng rng(77);
  const Eigen::MatrixXd O = random_rotation(5, rng);
  std::vector<ParticleFrame> plain, rotated;
  std::vector<double> times;
  for (int k = 0; k < 120; ++k) {
    plain.push_back(joint_diagonalize(prop.state()));
    rotated.push_back(joint_diagonalize(gauge_transform(prop.state(), O)));
    times.push_back(k * ic.dt);
    prop.advance();
  }
  const auto a = track_particles(plain, times);
  const auto b = track_particles(rotated, times);
  double worst = 0.0;
  for (std::size_t f = 0; f < a.frames(); ++f)
    for (int i = 0; i < 5; ++i) worst = std::max(worst, (a.positions[f][i] - b.positions[f][i]).norm());
  CHECK(worst < 1e-9);
  const auto na = estimate_diffusion({a}, 0.05, 0.5, DiffusionMethod::msd_slope);
  const auto nb = estimate_diffusion({b}, 0.05, 0.5, DiffusionMethod::msd_slope);
  CHECK(std::abs(na.nu_hat - nb.nu_hat) < 1e-9);
}
