#pragma once

// Population covariance models and their spectral data.
//
// All downstream theory consumes the eigenvalues produced here (through the
// empirical spectral distribution) and, for anisotropic spike quantities,
// the eigenvectors and the symmetric square root.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spikefluct/error.hpp"
#include "spikefluct/linalg.hpp"
#include "spikefluct/rng.hpp"

namespace spikefluct::spectra {

enum class RecipeKind { identity, diagonal, toeplitz, haar_rotated, dense };

inline const char* to_string(RecipeKind k) {
  switch (k) {
    case RecipeKind::identity: return "identity";
    case RecipeKind::diagonal: return "diagonal";
    case RecipeKind::toeplitz: return "toeplitz";
    case RecipeKind::haar_rotated: return "haar";
    case RecipeKind::dense: return "dense";
  }
  return "?";
}

/// How to build a covariance matrix. Only the fields relevant to `kind` are
/// read.
struct CovarianceRecipe {
  RecipeKind kind = RecipeKind::identity;
  std::vector<double> diagonal;  // diagonal
  double rho = 0.0;              // toeplitz: sigma_ij = rho^|i-j|
  double low = 1.0, high = 1.0;  // haar_rotated: eigenvalues ~ Unif(low, high)
  Matrix dense;                  // dense

  static CovarianceRecipe identity() { return {}; }
  static CovarianceRecipe diag(std::vector<double> entries) {
    CovarianceRecipe r;
    r.kind = RecipeKind::diagonal;
    r.diagonal = std::move(entries);
    return r;
  }
  static CovarianceRecipe toeplitz(double rho) {
    CovarianceRecipe r;
    r.kind = RecipeKind::toeplitz;
    r.rho = rho;
    return r;
  }
  static CovarianceRecipe haar_rotated(double low, double high) {
    CovarianceRecipe r;
    r.kind = RecipeKind::haar_rotated;
    r.low = low;
    r.high = high;
    return r;
  }
  static CovarianceRecipe from_matrix(Matrix m) {
    CovarianceRecipe r;
    r.kind = RecipeKind::dense;
    r.dense = std::move(m);
    return r;
  }
};

/// Samples an n x n orthogonal matrix from Haar measure: QR of a Gaussian
/// matrix with the columns of Q multiplied by sign(diag R).
inline Matrix haar_orthogonal(Index n, Stream& stream) {
  Matrix g(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) g(i, j) = stream.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix& r = qr.matrixQR();
  for (Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

/// An immutable population covariance Sigma with its spectral data.
///
/// Eigenvalues are sorted non-increasingly. The identity recipe stores no
/// eigenvectors or square root; they are materialized on first request.
class CovarianceModel {
 public:
  RecipeKind kind() const { return kind_; }
  Index dim() const { return eigenvalues_.size(); }
  bool is_identity() const { return kind_ == RecipeKind::identity; }
  const Vector& eigenvalues() const { return eigenvalues_; }

  const Matrix& eigenvectors() const {
    if (!eigenvectors_) {
      std::call_once(lazy_->once, [&] { lazy_->identity = Matrix::Identity(dim(), dim()); });
      return lazy_->identity;
    }
    return *eigenvectors_;
  }

  /// The symmetric PSD square root Sigma^{1/2}.
  const Matrix& sqrt_factor() const {
    if (!sqrt_) return eigenvectors();  // identity
    return *sqrt_;
  }

  Matrix matrix() const {
    if (is_identity()) return Matrix::Identity(dim(), dim());
    const Matrix& q = eigenvectors();
    return q * eigenvalues_.asDiagonal() * q.transpose();
  }

  /// Sigma^{1/2} A without forming the identity when Sigma = I.
  Matrix apply_sqrt(const Matrix& a) const {
    if (is_identity()) return a;
    if (kind_ == RecipeKind::diagonal) return diag_sqrt_.asDiagonal() * a;
    return *sqrt_ * a;
  }

  /// Sigma A.
  Matrix apply(const Matrix& a) const {
    if (is_identity()) return a;
    if (kind_ == RecipeKind::diagonal) return diag_sqrt_.cwiseAbs2().asDiagonal() * a;
    const Matrix& q = eigenvectors();
    return q * (eigenvalues_.asDiagonal() * (q.transpose() * a));
  }

  /// Reconstruction error max |Psi Lambda Psi^T - Sigma| of the stored
  /// eigendecomposition against the matrix the recipe describes.
  double reconstruction_error() const {
    const Matrix& q = eigenvectors();
    return max_abs(q * eigenvalues_.asDiagonal() * q.transpose() - reference_matrix());
  }

  double sqrt_error() const {
    const Matrix& s = sqrt_factor();
    return max_abs(s * s - reference_matrix());
  }

 private:
  friend CovarianceModel make_covariance(const CovarianceRecipe&, Index, std::uint64_t);

  Matrix reference_matrix() const {
    if (reference_) return *reference_;
    return matrix();
  }

  struct Lazy {
    std::once_flag once;
    Matrix identity;
  };

  RecipeKind kind_ = RecipeKind::identity;
  Vector eigenvalues_;
  std::shared_ptr<const Matrix> eigenvectors_;
  std::shared_ptr<const Matrix> sqrt_;
  std::shared_ptr<const Matrix> reference_;  // the matrix as specified, if dense/structured
  Vector diag_sqrt_;                         // diagonal recipe, original index order
  std::shared_ptr<Lazy> lazy_ = std::make_shared<Lazy>();
};

/// Builds a covariance model. `seed` is only consumed by the Haar recipe;
/// the result is a deterministic function of (recipe, m, seed).
inline CovarianceModel make_covariance(const CovarianceRecipe& recipe, Index m,
                                       std::uint64_t seed = 0) {
  if (m < 1) throw InvalidArgument("covariance dimension must be positive");
  CovarianceModel out;
  out.kind_ = recipe.kind;
  switch (recipe.kind) {
    case RecipeKind::identity: {
      out.eigenvalues_ = Vector::Ones(m);
      return out;
    }
    case RecipeKind::diagonal: {
      if (static_cast<Index>(recipe.diagonal.size()) != m) {
        throw InvalidArgument("diagonal recipe has " + std::to_string(recipe.diagonal.size()) +
                              " entries for dimension " + std::to_string(m));
      }
      std::vector<Index> order(static_cast<std::size_t>(m));
      std::iota(order.begin(), order.end(), Index{0});
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return recipe.diagonal[static_cast<std::size_t>(a)] >
               recipe.diagonal[static_cast<std::size_t>(b)];
      });
      const double top = recipe.diagonal[static_cast<std::size_t>(order.front())];
      Vector values(m);
      Matrix vectors = Matrix::Zero(m, m);
      Vector dsqrt(m);
      for (Index i = 0; i < m; ++i) {
        const double v = recipe.diagonal[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        if (v < -1e-8 * std::max(top, 0.0) || (top <= 0.0 && v < 0.0)) {
          throw NonPsdError("diagonal covariance entry " + std::to_string(v) + " is negative", v);
        }
        values[i] = std::max(v, 0.0);
        vectors(order[static_cast<std::size_t>(i)], i) = 1.0;
      }
      for (Index i = 0; i < m; ++i) dsqrt[i] = std::sqrt(std::max(recipe.diagonal[static_cast<std::size_t>(i)], 0.0));
      out.eigenvalues_ = values;
      out.eigenvectors_ = std::make_shared<const Matrix>(std::move(vectors));
      out.diag_sqrt_ = dsqrt;
      out.sqrt_ = std::make_shared<const Matrix>(Matrix(dsqrt.asDiagonal()));
      out.reference_ = std::make_shared<const Matrix>(Matrix(dsqrt.cwiseAbs2().asDiagonal()));
      return out;
    }
    case RecipeKind::toeplitz:
    case RecipeKind::dense: {
      Matrix a;
      if (recipe.kind == RecipeKind::toeplitz) {
        if (!(std::abs(recipe.rho) < 1.0)) throw InvalidArgument("toeplitz ratio must satisfy |rho| < 1");
        a.resize(m, m);
        for (Index i = 0; i < m; ++i) {
          for (Index j = 0; j < m; ++j) a(i, j) = std::pow(recipe.rho, static_cast<double>(std::abs(i - j)));
        }
      } else {
        a = recipe.dense;
        if (a.rows() != m || a.cols() != m) {
          throw InvalidArgument("dense covariance must be " + std::to_string(m) + "x" + std::to_string(m));
        }
        if (max_abs(a - a.transpose()) > 1e-12 * std::max(1.0, max_abs(a))) {
          throw InvalidArgument("dense covariance is not symmetric");
        }
        a = 0.5 * (a + a.transpose());
      }
      SymmetricEigen eig = symmetric_eigen_desc(a);
      const double top = eig.values[0];
      const double lowest = eig.values[m - 1];
      if (lowest < -1e-8 * std::max(top, 0.0) || (top <= 0.0 && lowest < 0.0)) {
        std::ostringstream msg;
        msg << "covariance is not positive semidefinite: eigenvalue " << lowest;
        throw NonPsdError(msg.str(), lowest);
      }
      eig.values = eig.values.cwiseMax(0.0);
      Matrix root = eig.vectors * eig.values.cwiseSqrt().asDiagonal() * eig.vectors.transpose();
      out.eigenvalues_ = eig.values;
      out.eigenvectors_ = std::make_shared<const Matrix>(std::move(eig.vectors));
      out.sqrt_ = std::make_shared<const Matrix>(std::move(root));
      out.reference_ = std::make_shared<const Matrix>(std::move(a));
      return out;
    }
    case RecipeKind::haar_rotated: {
      if (!(recipe.low <= recipe.high)) throw InvalidArgument("haar recipe needs low <= high");
      if (recipe.low < 0.0) throw NonPsdError("haar recipe eigenvalue bound is negative", recipe.low);
      Stream values_stream(seed, stream_id({0x5A11, 0}));
      Stream basis_stream(seed, stream_id({0x5A11, 1}));
      std::vector<double> drawn(static_cast<std::size_t>(m));
      for (double& v : drawn) v = values_stream.uniform(recipe.low, recipe.high);
      const Matrix o = haar_orthogonal(m, basis_stream);
      std::vector<Index> order(static_cast<std::size_t>(m));
      std::iota(order.begin(), order.end(), Index{0});
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return drawn[static_cast<std::size_t>(a)] > drawn[static_cast<std::size_t>(b)];
      });
      Vector values(m);
      Matrix vectors(m, m);
      for (Index i = 0; i < m; ++i) {
        const Index src = order[static_cast<std::size_t>(i)];
        values[i] = drawn[static_cast<std::size_t>(src)];
        vectors.col(i) = o.col(src);
      }
      Matrix root = vectors * values.cwiseSqrt().asDiagonal() * vectors.transpose();
      Matrix reference = vectors * values.asDiagonal() * vectors.transpose();
      out.eigenvalues_ = values;
      out.eigenvectors_ = std::make_shared<const Matrix>(std::move(vectors));
      out.sqrt_ = std::make_shared<const Matrix>(std::move(root));
      out.reference_ = std::make_shared<const Matrix>(std::move(reference));
      return out;
    }
  }
  throw InvalidArgument("unknown covariance recipe");
}

/// A discrete probability measure on [0, inf): the ESD nu of Sigma.
class SpectralDistribution {
 public:
  struct Atom {
    double value;
    double weight;
  };

  /// Validates and sorts atoms by value. Weights must be positive and sum to
  /// one within 1e-12.
  static SpectralDistribution from_atoms(std::vector<Atom> atoms) {
    if (atoms.empty()) throw InvalidArgument("spectral distribution needs at least one atom");
    long double total = 0.0L;
    for (const Atom& a : atoms) {
      if (!(a.weight > 0.0)) throw InvalidArgument("atom weights must be positive");
      if (a.value < 0.0) throw InvalidArgument("atom values must be non-negative");
      total += a.weight;
    }
    if (std::abs(static_cast<double>(total) - 1.0) > 1e-12) {
      throw InvalidArgument("atom weights must sum to 1");
    }
    std::stable_sort(atoms.begin(), atoms.end(),
                     [](const Atom& a, const Atom& b) { return a.value < b.value; });
    SpectralDistribution out;
    out.atoms_ = std::move(atoms);
    return out;
  }

  const std::vector<Atom>& atoms() const { return atoms_; }
  double max_value() const { return atoms_.back().value; }

  double total_weight() const {
    long double t = 0.0L;
    for (const Atom& a : atoms_) t += a.weight;
    return static_cast<double>(t);
  }

  /// nu([0, x]).
  double mass_at_or_below(double x) const {
    long double t = 0.0L;
    for (const Atom& a : atoms_) {
      if (a.value <= x) t += a.weight;
    }
    return static_cast<double>(t);
  }

  /// integral g(s) nu(ds).
  template <typename F>
  double integrate(F&& g) const {
    long double t = 0.0L;
    for (const Atom& a : atoms_) t += static_cast<long double>(a.weight) * g(a.value);
    return static_cast<double>(t);
  }

 private:
  std::vector<Atom> atoms_;
};

/// ESD of a list of eigenvalues. Values closer than 1e-12 * max(1, |top|) are
/// merged; weights are multiplicity / M.
inline SpectralDistribution esd(const Vector& eigenvalues) {
  const Index m = eigenvalues.size();
  if (m < 1) throw InvalidArgument("esd of an empty spectrum");
  std::vector<double> v(eigenvalues.data(), eigenvalues.data() + m);
  std::sort(v.begin(), v.end());
  const double tol = 1e-12 * std::max(1.0, std::abs(v.back()));
  std::vector<std::pair<double, std::size_t>> groups;
  for (const double x : v) {
    if (!groups.empty() && x - groups.back().first <= tol) {
      groups.back().second++;
    } else {
      groups.emplace_back(x, 1);
    }
  }
  std::vector<SpectralDistribution::Atom> atoms;
  atoms.reserve(groups.size());
  for (const auto& [value, count] : groups) {
    atoms.push_back({value, static_cast<double>(count) / static_cast<double>(m)});
  }
  return SpectralDistribution::from_atoms(std::move(atoms));
}

inline SpectralDistribution esd(const CovarianceModel& model) { return esd(model.eigenvalues()); }

}  // namespace spikefluct::spectra
