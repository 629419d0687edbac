#include "beables/matrix_core.hpp"

#include <cmath>
#include <string>

#include "beables/errors.hpp"

namespace beables {

void ModelParams::validate() const {
  if (d < 1) throw ContractError("ModelParams: d must be >= 1");
  if (N < 2) throw ContractError("ModelParams: N must be >= 2");
  if (!(mu > 0.0)) throw ContractError("ModelParams: mu must be > 0");
  if (!(omega > 0.0)) throw ContractError("ModelParams: omega must be > 0");
  if (!(kappa >= 0.0)) throw ContractError("ModelParams: kappa must be >= 0");
}

MatrixConfiguration MatrixConfiguration::zeros(int d, int N) {
  MatrixConfiguration c;
  c.X.assign(d, SymMatrix(N));
  c.V.assign(d, SymMatrix(N));
  return c;
}

void check_shapes(const MatrixConfiguration& config, const ModelParams& params) {
  if (config.X.size() != static_cast<std::size_t>(params.d) ||
      config.V.size() != static_cast<std::size_t>(params.d))
    throw ContractError("configuration has " + std::to_string(config.X.size()) +
                        " directions, params.d = " + std::to_string(params.d));
  for (int a = 0; a < params.d; ++a)
    if (config.X[a].size() != params.N || config.V[a].size() != params.N)
      throw ContractError("matrix size does not match params.N = " + std::to_string(params.N));
}

namespace {

std::vector<Eigen::MatrixXd> dense_positions(const MatrixConfiguration& config) {
  std::vector<Eigen::MatrixXd> xs;
  xs.reserve(config.X.size());
  for (const auto& x : config.X) xs.push_back(x.dense());
  return xs;
}

double pair_factor(PairSum p) { return p == PairSum::ordered_pairs ? 2.0 : 1.0; }

}  // namespace

double commutator_norm2(const MatrixConfiguration& config) {
  const auto xs = dense_positions(config);
  double total = 0.0;
  for (std::size_t a = 0; a < xs.size(); ++a)
    for (std::size_t b = a + 1; b < xs.size(); ++b) {
      const Eigen::MatrixXd c = xs[a] * xs[b] - xs[b] * xs[a];
      total += c.squaredNorm();
    }
  return total;
}

double potential_energy(const MatrixConfiguration& config, const ModelParams& params) {
  check_shapes(config, params);
  // C is antisymmetric, so −Tr(C²) = ‖C‖²_F; summing squares keeps U ≥ 0 exactly.
  double u = pair_factor(params.pair_sum) * commutator_norm2(config);
  if (params.kappa > 0.0) {
    double tr2 = 0.0;
    for (const auto& x : config.X) tr2 += x.trace_of_square();
    u += params.kappa * tr2;
  }
  return params.energy_scale() * u;
}

double kinetic_energy(const MatrixConfiguration& config, const ModelParams& params) {
  check_shapes(config, params);
  double k = 0.0;
  for (const auto& v : config.V) k += v.trace_of_square();
  return params.mu * k;
}

std::vector<SymMatrix> force(const MatrixConfiguration& config, const ModelParams& params) {
  check_shapes(config, params);
  const int d = params.d;
  const int n = params.N;
  const auto xs = dense_positions(config);
  std::vector<Eigen::MatrixXd> acc(d, Eigen::MatrixXd::Zero(n, n));
  for (int a = 0; a < d; ++a)
    for (int b = a + 1; b < d; ++b) {
      const Eigen::MatrixXd c = xs[a] * xs[b] - xs[b] * xs[a];
      acc[a].noalias() += xs[b] * c;
      acc[a].noalias() -= c * xs[b];
      acc[b].noalias() += c * xs[a];
      acc[b].noalias() -= xs[a] * c;
    }
  const double scale = 2.0 * params.energy_scale() * pair_factor(params.pair_sum);
  std::vector<SymMatrix> f;
  f.reserve(d);
  for (int a = 0; a < d; ++a) {
    SymMatrix fa = SymMatrix::symmetrized(acc[a]);
    fa *= scale;
    if (params.kappa > 0.0) fa.axpy(-2.0 * params.kappa * params.energy_scale(), config.X[a]);
    f.push_back(std::move(fa));
  }
  return f;
}

Spectrum eigenvalues(const MatrixConfiguration& config) {
  Spectrum s;
  s.lambda.reserve(config.X.size());
  for (const auto& x : config.X) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x.dense(), Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& ev = es.eigenvalues();  // ascending
    s.lambda.emplace_back(ev.data(), ev.data() + ev.size());
  }
  return s;
}

MatrixConfiguration gauge_transform(const MatrixConfiguration& config, const Eigen::MatrixXd& O) {
  const int n = config.N();
  if (O.rows() != n || O.cols() != n) throw ContractError("gauge_transform: O has wrong shape");
  const double orth = (O.transpose() * O - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
  if (orth >= 1e-10) throw ContractError("gauge_transform: O is not orthogonal");
  if (O.determinant() <= 0.0) throw ContractError("gauge_transform: det O must be +1");
  MatrixConfiguration out;
  out.time = config.time;
  auto conj = [&](const SymMatrix& m) {
    return SymMatrix::symmetrized(O * m.dense() * O.transpose());
  };
  for (const auto& x : config.X) out.X.push_back(conj(x));
  for (const auto& v : config.V) out.V.push_back(conj(v));
  return out;
}

MatrixConfiguration translate(const MatrixConfiguration& config, const std::vector<double>& v) {
  if (v.size() != config.X.size()) throw ContractError("translate: v must have d entries");
  MatrixConfiguration out = config;
  for (std::size_t a = 0; a < v.size(); ++a) out.X[a].add_identity(v[a]);
  return out;
}

std::vector<double> com_momentum(const MatrixConfiguration& config, const ModelParams& params) {
  std::vector<double> p;
  p.reserve(config.V.size());
  for (const auto& v : config.V) p.push_back(2.0 * params.mu * v.trace());
  return p;
}

MatrixConfiguration random_config(const ModelParams& params, double spread, std::uint64_t seed) {
  params.validate();
  if (!(spread >= 0.0)) throw ContractError("random_config: spread must be >= 0");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto c = MatrixConfiguration::zeros(params.d, params.N);
  for (auto& x : c.X)
    for (double& e : x.packed()) e = spread * gauss(rng);
  return c;
}

Eigen::MatrixXd random_rotation(int n, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g(i, j) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  if (q.determinant() < 0.0) q.col(0) = -q.col(0);
  return q;
}

}  // namespace beables
