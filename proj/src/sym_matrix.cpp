#include "beables/sym_matrix.hpp"

#include <cmath>

#include "beables/errors.hpp"

namespace beables {

SymMatrix SymMatrix::identity(int n) {
  SymMatrix m(n);
  m.add_identity(1.0);
  return m;
}

SymMatrix SymMatrix::from_upper(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw ContractError("SymMatrix: matrix is not square");
  const int n = static_cast<int>(m.rows());
  SymMatrix s(n);
  std::size_t k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) s.packed_[k++] = m(i, j);
  return s;
}

SymMatrix SymMatrix::symmetrized(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw ContractError("SymMatrix: matrix is not square");
  const int n = static_cast<int>(m.rows());
  SymMatrix s(n);
  std::size_t k = 0;
  for (int i = 0; i < n; ++i) {
    s.packed_[k++] = m(i, i);
    for (int j = i + 1; j < n; ++j) s.packed_[k++] = 0.5 * (m(i, j) + m(j, i));
  }
  return s;
}

Eigen::MatrixXd SymMatrix::dense() const {
  Eigen::MatrixXd m(n_, n_);
  std::size_t k = 0;
  for (int i = 0; i < n_; ++i)
    for (int j = i; j < n_; ++j) {
      m(i, j) = packed_[k];
      m(j, i) = packed_[k];
      ++k;
    }
  return m;
}

double SymMatrix::trace() const {
  double t = 0.0;
  for (int i = 0; i < n_; ++i) t += packed_[index(i, i)];
  return t;
}

double SymMatrix::trace_of_square() const {
  double diag = 0.0, off = 0.0;
  std::size_t k = 0;
  for (int i = 0; i < n_; ++i) {
    diag += packed_[k] * packed_[k];
    ++k;
    for (int j = i + 1; j < n_; ++j, ++k) off += packed_[k] * packed_[k];
  }
  return diag + 2.0 * off;
}

double SymMatrix::max_abs() const {
  double m = 0.0;
  for (double x : packed_) m = std::max(m, std::abs(x));
  return m;
}

SymMatrix& SymMatrix::operator+=(const SymMatrix& o) { return axpy(1.0, o); }
SymMatrix& SymMatrix::operator-=(const SymMatrix& o) { return axpy(-1.0, o); }

SymMatrix& SymMatrix::operator*=(double s) {
  for (double& x : packed_) x *= s;
  return *this;
}

SymMatrix& SymMatrix::axpy(double s, const SymMatrix& o) {
  if (o.n_ != n_) throw ContractError("SymMatrix: size mismatch");
  for (std::size_t k = 0; k < packed_.size(); ++k) packed_[k] += s * o.packed_[k];
  return *this;
}

void SymMatrix::add_identity(double s) {
  for (int i = 0; i < n_; ++i) packed_[index(i, i)] += s;
}

}  // namespace beables
