#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>

#include "spikefluct/error.hpp"

namespace spikefluct {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;

/// Eigenpairs of a symmetric matrix, eigenvalues in non-increasing order.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;
};

/// Flips `v` so that its entry of largest magnitude is positive; ties go to
/// the lowest index.
inline void fix_sign(Eigen::Ref<Vector> v) {
  Index best = 0;
  double best_abs = -1.0;
  for (Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }
  if (v.size() > 0 && v[best] < 0.0) v = -v;
}

inline SymmetricEigen symmetric_eigen_desc(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("symmetric eigendecomposition did not converge");
  }
  const Index n = a.rows();
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  // Eigen returns ascending order; reversing keeps a deterministic tie order.
  for (Index i = 0; i < n; ++i) {
    out.values[i] = solver.eigenvalues()[n - 1 - i];
    out.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
    fix_sign(out.vectors.col(i));
  }
  return out;
}

inline Vector symmetric_eigenvalues_desc(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("symmetric eigenvalue solver did not converge");
  }
  return solver.eigenvalues().reverse();
}

inline double max_abs(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// Deviation of Q^T Q from the identity in max-entry norm.
inline double orthonormality_defect(const Matrix& q) {
  return max_abs(q.transpose() * q - Matrix::Identity(q.cols(), q.cols()));
}

}  // namespace spikefluct
