#pragma once

// Beables of the matrix model: d real symmetric N×N position matrices with
// their velocities, the commutator-squared potential, and the spectral
// observables that are invariant under SO(N) conjugation.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "beables/rng.hpp"
#include "beables/sym_matrix.hpp"

namespace beables {

enum class PairSum { unordered_pairs, ordered_pairs };

struct ModelParams {
  int d = 2;
  int N = 4;
  double mu = 1.0;     // mass·length²
  double omega = 1.0;  // frequency
  double kappa = 0.0;  // harmonic regulator κ·μω²·Tr X², 0 = pure model
  PairSum pair_sum = PairSum::unordered_pairs;

  /// ε = μω².
  double energy_scale() const { return mu * omega * omega; }
  /// Throws ContractError when an invariant is broken.
  void validate() const;
  /// Scalar degrees of freedom, d·N(N+1)/2.
  int dof() const { return d * N * (N + 1) / 2; }

  bool operator==(const ModelParams&) const = default;
};

struct MatrixConfiguration {
  std::vector<SymMatrix> X;  // positions, dimensionless
  std::vector<SymMatrix> V;  // velocities, units of ω
  double time = 0.0;

  static MatrixConfiguration zeros(int d, int N);
  int d() const { return static_cast<int>(X.size()); }
  int N() const { return X.empty() ? 0 : X.front().size(); }

  bool operator==(const MatrixConfiguration&) const = default;
};

/// Per-direction eigenvalues, ascending.
struct Spectrum {
  std::vector<std::vector<double>> lambda;  // [a][i]
};

/// Joint-diagonalized particle positions.
struct ParticleFrame {
  std::vector<Eigen::VectorXd> positions;  // N points in R^d, lexicographic order
  double residual = 0.0;                   // off-diagonal Frobenius norm left over
  Eigen::MatrixXd frame;                   // O with O·X_a·Oᵀ ≈ diagonal
  int sweeps = 0;
  bool converged = true;
};

/// Throws ContractError unless config has d matrices of size N in both X and V.
void check_shapes(const MatrixConfiguration& config, const ModelParams& params);

/// U = −μω² Σ_pairs Tr([X_a,X_b]²) + κμω² Σ_a Tr(X_a²) ≥ 0.
double potential_energy(const MatrixConfiguration& config, const ModelParams& params);

/// K = μ Σ_a Tr(V_a²).
double kinetic_energy(const MatrixConfiguration& config, const ModelParams& params);

/// F_a = −∂U/∂X_a as the Frobenius gradient, i.e. dU = −Σ_a Tr(F_a dX_a).
/// A symmetric perturbation of one off-diagonal pair (X_ij, X_ji) therefore
/// changes U by −2·F_ij per unit step.
std::vector<SymMatrix> force(const MatrixConfiguration& config, const ModelParams& params);

Spectrum eigenvalues(const MatrixConfiguration& config);

/// Jacobi sweeps over Givens rotations minimizing Σ_a ‖offdiag(O X_a Oᵀ)‖²_F.
/// An optional starting frame (e.g. from the previous time step) speeds up
/// tracking of slowly moving configurations.
ParticleFrame joint_diagonalize(const MatrixConfiguration& config, int max_sweeps = 100,
                                double tol = 1e-12,
                                const Eigen::MatrixXd* initial_frame = nullptr);

/// X_a → O X_a Oᵀ and V_a → O V_a Oᵀ. O must lie in SO(N).
MatrixConfiguration gauge_transform(const MatrixConfiguration& config, const Eigen::MatrixXd& O);

/// X_a → X_a + v_a·I.
MatrixConfiguration translate(const MatrixConfiguration& config, const std::vector<double>& v);

/// p_a = 2μ Tr(V_a), the momentum conjugate to the trace mode.
std::vector<double> com_momentum(const MatrixConfiguration& config, const ModelParams& params);

/// Independent Gaussian entries of variance spread² (diagonal and each
/// independent off-diagonal entry), V = 0. E[Tr X²] = N²·spread².
MatrixConfiguration random_config(const ModelParams& params, double spread, std::uint64_t seed);

/// Haar-distributed SO(N) element: QR of a Gaussian matrix with the sign of
/// R's diagonal absorbed, one column flipped if det = −1.
Eigen::MatrixXd random_rotation(int n, Rng& rng);

/// ‖C‖_F² summed over pairs, C = [X_a, X_b]; zero iff all X_a commute.
double commutator_norm2(const MatrixConfiguration& config);

}  // namespace beables
