#include <algorithm>
#include <cmath>
#include <numeric>

#include "beables/errors.hpp"
#include "beables/matrix_core.hpp"

namespace beables {

namespace {

double offdiag_norm2(const std::vector<Eigen::MatrixXd>& as) {
  // Summed entry by entry; ‖A‖² − ‖diag A‖² cancels catastrophically.
  double s = 0.0;
  for (const auto& a : as)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        if (i != j) s += a(i, j) * a(i, j);
  return s;
}

}  // namespace

// Real-symmetric variant of the Cardoso–Souloumiac joint diagonalization:
// for each pair (p,q) the Givens angle maximizing the summed diagonal power
// comes in closed form from a 2×2 accumulated Gram matrix.
ParticleFrame joint_diagonalize(const MatrixConfiguration& config, int max_sweeps, double tol,
                                const Eigen::MatrixXd* initial_frame) {
  const int d = config.d();
  const int n = config.N();
  if (d < 1) throw ContractError("joint_diagonalize: need at least one matrix");

  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);  // A_a = vᵀ X_a v
  std::vector<Eigen::MatrixXd> as;
  as.reserve(d);
  if (initial_frame != nullptr) {
    if (initial_frame->rows() != n || initial_frame->cols() != n)
      throw ContractError("joint_diagonalize: initial frame has wrong shape");
    v = initial_frame->transpose();
  }
  for (const auto& x : config.X) as.push_back(v.transpose() * x.dense() * v);

  const double scale2 = [&] {
    double s = 0.0;
    for (const auto& a : as) s += a.squaredNorm();
    return s;
  }();
  const double angle_eps = 1e-15;

  ParticleFrame out;
  out.converged = false;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    if (offdiag_norm2(as) <= tol * tol) {
      out.converged = true;
      break;
    }
    bool rotated = false;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double g11 = 0.0, g12 = 0.0, g22 = 0.0;
        for (const auto& a : as) {
          const double h1 = a(p, p) - a(q, q);
          const double h2 = a(p, q) + a(q, p);
          g11 += h1 * h1;
          g12 += h1 * h2;
          g22 += h2 * h2;
        }
        const double ton = g11 - g22;
        const double toff = 2.0 * g12;
        if (ton == 0.0 && toff == 0.0) continue;
        // Half of the principal-axis angle of the 2×2 Gram matrix; atan2 keeps
        // the exactly degenerate case (toff = 0, ton < 0) at π/4.
        const double theta = 0.25 * std::atan2(toff, ton);
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        if (std::abs(s) <= angle_eps) continue;
        // Skip rotations that cannot change anything at this precision.
        if (g22 <= 1e-30 * scale2) continue;
        rotated = true;
        for (auto& a : as) {
          // a ← Gᵀ a G with G = [[c, −s], [s, c]] acting on (p, q).
          for (int k = 0; k < n; ++k) {
            const double ap = a(p, k), aq = a(q, k);
            a(p, k) = c * ap + s * aq;
            a(q, k) = -s * ap + c * aq;
          }
          for (int k = 0; k < n; ++k) {
            const double ap = a(k, p), aq = a(k, q);
            a(k, p) = c * ap + s * aq;
            a(k, q) = -s * ap + c * aq;
          }
        }
        for (int k = 0; k < n; ++k) {
          const double vp = v(k, p), vq = v(k, q);
          v(k, p) = c * vp + s * vq;
          v(k, q) = -s * vp + c * vq;
        }
      }
    }
    if (!rotated) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged && offdiag_norm2(as) <= tol * tol) out.converged = true;
  out.sweeps = sweep;
  out.residual = std::sqrt(offdiag_norm2(as));

  std::vector<Eigen::VectorXd> pts(n, Eigen::VectorXd(d));
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) pts[i](a) = as[a](i, i);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return std::lexicographical_compare(pts[i].data(), pts[i].data() + d, pts[j].data(),
                                        pts[j].data() + d);
  });
  Eigen::MatrixXd frame(n, n);
  out.positions.reserve(n);
  for (int r = 0; r < n; ++r) {
    out.positions.push_back(pts[order[r]]);
    frame.row(r) = v.col(order[r]).transpose();
  }
  if (frame.determinant() < 0.0) frame.row(0) = -frame.row(0);
  out.frame = std::move(frame);
  return out;
}

}  // namespace beables
