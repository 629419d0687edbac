#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace beables {

/// Real symmetric N×N matrix stored as its packed upper triangle, so
/// symmetry holds by construction. Entry-wise arithmetic acts on the
/// packed array directly; products go through dense().
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(int n) : n_(n), packed_(packed_size(n), 0.0) {}

  static SymMatrix identity(int n);
  /// Takes the upper triangle of a square matrix; the lower part is ignored.
  static SymMatrix from_upper(const Eigen::MatrixXd& m);
  /// (m + mᵀ)/2.
  static SymMatrix symmetrized(const Eigen::MatrixXd& m);

  static constexpr std::size_t packed_size(int n) {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(n + 1) / 2;
  }

  int size() const { return n_; }

  std::size_t index(int i, int j) const {
    if (i > j) std::swap(i, j);
    return static_cast<std::size_t>(i) * n_ - static_cast<std::size_t>(i) * (i - 1) / 2 +
           static_cast<std::size_t>(j - i);
  }

  double operator()(int i, int j) const { return packed_[index(i, j)]; }
  double& at(int i, int j) { return packed_[index(i, j)]; }

  std::span<const double> packed() const { return packed_; }
  std::span<double> packed() { return packed_; }

  Eigen::MatrixXd dense() const;
  double trace() const;
  /// Tr(M²) = Σ_i M_ii² + 2 Σ_{i<j} M_ij².
  double trace_of_square() const;
  double max_abs() const;

  SymMatrix& operator+=(const SymMatrix& o);
  SymMatrix& operator-=(const SymMatrix& o);
  SymMatrix& operator*=(double s);
  /// this += s·o
  SymMatrix& axpy(double s, const SymMatrix& o);
  void add_identity(double s);

  bool operator==(const SymMatrix&) const = default;

 private:
  int n_ = 0;
  std::vector<double> packed_;
};

inline SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
inline SymMatrix operator-(SymMatrix a, const SymMatrix& b) { return a -= b; }
inline SymMatrix operator*(double s, SymMatrix a) { return a *= s; }

}  // namespace beables
