#pragma once

// Deterministic spike theory for the additive model Y~ = S + Sigma^{1/2} X.
//
// The population covariance of Y~ is Sigma~ = Sigma + S S^T. Each eigenvalue
// sigma~_k of Sigma~ above the threshold -1/w_+ produces a sample spike whose
// almost-sure limit is theta_k = theta(sigma~_k). The fluctuation
// sqrt(N)(lambda_k - theta_k) splits into a Gaussian part Phi_k, a shift L_k
// and a non-universal linear statistic Theta_k of X; this header computes
// every deterministic quantity of that decomposition.

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spikefluct/error.hpp"
#include "spikefluct/linalg.hpp"
#include "spikefluct/noise.hpp"
#include "spikefluct/spectra.hpp"
#include "spikefluct/stats.hpp"
#include "spikefluct/stieltjes.hpp"

namespace spikefluct::spikes {

using ensemble::NoiseLaw;
using spectra::CovarianceModel;

inline constexpr Index kMaxRank = 64;

/// Low-rank signal S = U diag(d) V^T with d_1 >= ... >= d_K > 0.
class SignalModel {
 public:
  /// Validates orthonormality (1e-10) and positivity; reorders the factors so
  /// that d is non-increasing.
  static SignalModel from_factors(Matrix u, Vector d, Matrix v) {
    const Index k = d.size();
    if (u.cols() != k || v.cols() != k) throw InvalidArgument("signal factors have inconsistent rank");
    if (k > kMaxRank) throw InvalidArgument("signal rank exceeds " + std::to_string(kMaxRank));
    for (Index i = 0; i < k; ++i) {
      if (!(d[i] > 0.0)) throw InvalidArgument("singular values must be positive");
    }
    if (k > 0 && (orthonormality_defect(u) > 1e-10 || orthonormality_defect(v) > 1e-10)) {
      throw InvalidArgument("signal factors are not column-orthonormal");
    }
    std::vector<Index> order(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return d[a] > d[b]; });
    SignalModel s;
    s.u_.resize(u.rows(), k);
    s.v_.resize(v.rows(), k);
    s.d_.resize(k);
    for (Index i = 0; i < k; ++i) {
      const Index src = order[static_cast<std::size_t>(i)];
      s.u_.col(i) = u.col(src);
      s.v_.col(i) = v.col(src);
      s.d_[i] = d[src];
    }
    s.m_ = u.rows();
    s.n_ = v.rows();
    return s;
  }

  /// Rank-K truncated SVD of a dense M x N matrix; singular values below
  /// rank_tol * d_1 are dropped. Left vectors follow the library sign
  /// convention and the right vectors are flipped with them.
  static SignalModel from_dense(const Matrix& dense, double rank_tol = 1e-10) {
    Eigen::BDCSVD<Matrix> svd(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    Index k = 0;
    const double top = sv.size() > 0 ? sv[0] : 0.0;
    while (k < sv.size() && top > 0.0 && sv[k] > rank_tol * top) ++k;
    if (k > kMaxRank) throw InvalidArgument("signal rank exceeds " + std::to_string(kMaxRank));
    SignalModel s;
    s.m_ = dense.rows();
    s.n_ = dense.cols();
    s.u_ = svd.matrixU().leftCols(k);
    s.v_ = svd.matrixV().leftCols(k);
    s.d_ = sv.head(k);
    for (Index i = 0; i < k; ++i) {
      const Vector before = s.u_.col(i);
      fix_sign(s.u_.col(i));
      if (s.u_.col(i).dot(before) < 0.0) s.v_.col(i) = -s.v_.col(i);
    }
    s.dense_input_ = dense;
    return s;
  }

  /// S = d e_1 e_1^T, the localized single spike.
  static SignalModel localized(Index m, Index n, double d) {
    Matrix u = Matrix::Zero(m, 1);
    Matrix v = Matrix::Zero(n, 1);
    u(0, 0) = 1.0;
    v(0, 0) = 1.0;
    return from_factors(u, Vector::Constant(1, d), v);
  }

  Index rows() const { return m_; }
  Index cols() const { return n_; }
  Index rank() const { return d_.size(); }
  const Matrix& left() const { return u_; }
  const Matrix& right() const { return v_; }
  const Vector& singular_values() const { return d_; }

  Matrix dense() const { return u_ * d_.asDiagonal() * v_.transpose(); }

  /// S^T x.
  Vector transpose_times(const Vector& x) const { return v_ * (d_.asDiagonal() * (u_.transpose() * x)); }

  /// max |U D V^T - S| against the dense input (0 when built from factors).
  double reconstruction_error() const {
    if (dense_input_.size() == 0) return 0.0;
    return max_abs(dense() - dense_input_);
  }

 private:
  Index m_ = 0, n_ = 0;
  Matrix u_, v_;
  Vector d_;
  Matrix dense_input_;
};

/// Top eigenpairs of Sigma~ = Sigma + S S^T and the supercritical count K0.
struct DeformedPopulation {
  Vector spectrum;     // all eigenvalues of Sigma~, non-increasing
  Vector sigma_tilde;  // the top min(K + 1, M)
  Matrix psi;          // M x K unit eigenvectors, sign-normalized
  double threshold = 0.0;
  double tau = 0.0;
  double phi = 0.0;
  stieltjes::EdgeData edge{};
  Index k0 = 0;
  Vector gaps;  // sigma~_k - sigma~_{k+1}, k = 1..K
  std::vector<std::string> warnings;
  Index n = 0;

  /// Residual max_k |Sigma~ psi_k - sigma~_k psi_k|.
  double eigen_residual(const Matrix& sigma_tilde_matrix) const {
    double r = 0.0;
    for (Index k = 0; k < psi.cols(); ++k) {
      r = std::max(r, (sigma_tilde_matrix * psi.col(k) - sigma_tilde[k] * psi.col(k)).cwiseAbs().maxCoeff());
    }
    return r;
  }
};

inline Matrix deformed_matrix(const CovarianceModel& sigma, const SignalModel& s) {
  const Matrix& u = s.left();
  return sigma.matrix() + u * s.singular_values().cwiseAbs2().asDiagonal() * u.transpose();
}

/// Builds Sigma~ and classifies its top eigenvalues against -1/w_+ + 2 tau.
/// Spikes in the marginal band (-1/w_+, -1/w_+ + 2 tau) are reported but not
/// counted; K0 = 0 is returned with an advisory rather than thrown.
inline DeformedPopulation deform(const CovarianceModel& sigma, const SignalModel& s, double tau) {
  if (s.rank() == 0) {
    throw InvalidArgument("signal has rank 0; the spiked model excludes S = 0");
  }
  if (s.rows() != sigma.dim()) {
    throw InvalidArgument("signal has " + std::to_string(s.rows()) + " rows but Sigma is " +
                          std::to_string(sigma.dim()) + "-dimensional");
  }
  if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
  const Index m = sigma.dim();
  const Index k = s.rank();
  DeformedPopulation pop;
  pop.n = s.cols();
  pop.tau = tau;
  pop.phi = static_cast<double>(m) / static_cast<double>(s.cols());
  pop.edge = stieltjes::find_w_plus(spectra::esd(sigma), pop.phi);
  pop.threshold = pop.edge.threshold();

  const SymmetricEigen eig = symmetric_eigen_desc(deformed_matrix(sigma, s));
  pop.spectrum = eig.values;
  const Index top = std::min(k + 1, m);
  pop.sigma_tilde = eig.values.head(top);
  pop.psi = eig.vectors.leftCols(std::min(k, m));
  pop.gaps = Vector::Zero(std::min(k, m));
  for (Index i = 0; i < pop.gaps.size(); ++i) {
    pop.gaps[i] = i + 1 < m ? eig.values[i] - eig.values[i + 1] : eig.values[i];
  }
  const double cut = pop.threshold + 2.0 * tau;
  while (pop.k0 < pop.psi.cols() && pop.sigma_tilde[pop.k0] >= cut) ++pop.k0;
  for (Index i = 0; i < pop.psi.cols(); ++i) {
    const double st = pop.sigma_tilde[i];
    if (st > pop.threshold && st < cut) {
      std::ostringstream msg;
      msg << "spike " << i + 1 << " (sigma~ = " << st << ") lies in the marginal band ("
          << pop.threshold << ", " << cut << ") and is excluded from K0";
      pop.warnings.push_back(msg.str());
    }
  }
  for (Index i = 0; i < pop.k0; ++i) {
    if (pop.gaps[i] < tau) {
      std::ostringstream msg;
      msg << "gap sigma~_" << i + 1 << " - sigma~_" << i + 2 << " = " << pop.gaps[i] << " is below tau";
      pop.warnings.push_back(msg.str());
    }
  }
  if (pop.k0 == 0) {
    pop.warnings.push_back("no supercritical spike: all sigma~_k are below threshold + 2 tau");
  }
  return pop;
}

/// Mixed moment sum_t prod_j a_j[t]^{p_j}, accumulated with compensation in
/// extended precision.
inline double mixed_moment(std::span<const Vector> vectors, std::span<const int> powers) {
  if (vectors.size() != powers.size() || vectors.empty()) {
    throw InvalidArgument("mixed moment needs one power per vector");
  }
  const Index len = vectors[0].size();
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    if (vectors[j].size() != len) throw InvalidArgument("mixed moment vectors differ in length");
    if (powers[j] < 1) throw InvalidArgument("mixed moment powers must be positive");
  }
  stats::CompensatedSum acc;
  for (Index t = 0; t < len; ++t) {
    long double term = 1.0L;
    for (std::size_t j = 0; j < vectors.size(); ++j) {
      const long double x = vectors[j][t];
      for (int p = 0; p < powers[j]; ++p) term *= x;
    }
    acc.add(term);
  }
  return static_cast<double>(acc.value());
}

inline double mixed_moment(const Vector& a, int pa, const Vector& b, int pb) {
  const Vector vs[2] = {a, b};
  const int ps[2] = {pa, pb};
  return mixed_moment(std::span<const Vector>(vs, 2), std::span<const int>(ps, 2));
}

/// Per-spike vectors and scalars.
struct Spike {
  double sigma_tilde = 0.0;
  double theta = 0.0;
  double theta_prime = 0.0;
  double m_theta = 0.0;   // m(theta) = -1/sigma~
  double shift = 0.0;     // L_k
  Vector psi;             // eigenvector of Sigma~
  Vector pi_tilde;        // (Sigma / (sigma~ - Sigma))_ii
  Vector sqrt_sigma_psi;  // Sigma^{1/2} psi
  Vector sigma_psi;       // Sigma psi
  Vector s_top_psi;       // S^T psi
  Vector u;               // sqrt(theta) (I + m Sigma) psi
  Vector v;               // S^T psi
  Vector xi;              // null vector of A_Pi(theta), length 2K
};

struct SpikeTheory {
  Index m = 0, n = 0;
  double phi = 0.0;
  double kappa3 = 0.0, kappa4 = 0.0;
  std::vector<Spike> spikes;  // K0 entries
  Matrix v010, v120, v;       // K0 x K0, symmetric
  Matrix w;                   // K0 x K0

  Index k0() const { return static_cast<Index>(spikes.size()); }

  Vector shifts() const {
    Vector l(k0());
    for (Index k = 0; k < k0(); ++k) l[k] = spikes[static_cast<std::size_t>(k)].shift;
    return l;
  }

  /// Covariance of (Theta_1, ..., Theta_K0) for unit-variance entries:
  /// 4 theta'_k theta'_j (a_k . a_j)(b_k . b_j).
  Matrix theta_covariance() const {
    Matrix c(k0(), k0());
    for (Index k = 0; k < k0(); ++k) {
      for (Index j = 0; j < k0(); ++j) {
        const Spike& a = spikes[static_cast<std::size_t>(k)];
        const Spike& b = spikes[static_cast<std::size_t>(j)];
        c(k, j) = 4.0 * a.theta_prime * b.theta_prime * a.sqrt_sigma_psi.dot(b.sqrt_sigma_psi) *
                  a.s_top_psi.dot(b.s_top_psi);
      }
    }
    return c;
  }
};

/// (Sigma / (s - Sigma))_ii for every i.
inline Vector pi_tilde_vector(const CovarianceModel& sigma, double s) {
  const Vector& ev = sigma.eigenvalues();
  Vector weight(ev.size());
  for (Index j = 0; j < ev.size(); ++j) {
    const double gap = s - ev[j];
    if (std::abs(gap) < 1e-10 * std::abs(s)) {
      std::ostringstream msg;
      msg << "sigma~ = " << s << " is within 1e-10 of the population eigenvalue " << ev[j];
      throw SingularityError(msg.str());
    }
    weight[j] = ev[j] / gap;
  }
  if (sigma.is_identity()) return Vector::Constant(ev.size(), weight[0]);
  return sigma.eigenvectors().cwiseAbs2() * weight;
}

/// Every deterministic quantity of the spike fluctuation limit for the
/// K0 supercritical spikes of `pop`.
inline SpikeTheory asymptotic_quantities(const CovarianceModel& sigma, const SignalModel& s,
                                         const DeformedPopulation& pop, const NoiseLaw& law) {
  if (pop.k0 < 1) throw InvalidArgument("asymptotic quantities need at least one supercritical spike");
  const Index m = sigma.dim();
  const Index n = s.cols();
  const double dn = static_cast<double>(n);
  const auto nu = spectra::esd(sigma);
  SpikeTheory th;
  th.m = m;
  th.n = n;
  th.phi = pop.phi;
  th.kappa3 = law.kappa3();
  th.kappa4 = law.kappa4();
  const Index k0 = pop.k0;
  const Matrix& u_factor = s.left();
  const Vector d2 = s.singular_values().cwiseAbs2();

  for (Index k = 0; k < k0; ++k) {
    Spike sp;
    sp.sigma_tilde = pop.sigma_tilde[k];
    const auto tv = stieltjes::theta_map(sp.sigma_tilde, nu, pop.phi, pop.edge);
    sp.theta = tv.theta;
    sp.theta_prime = tv.theta_prime;
    sp.m_theta = -1.0 / sp.sigma_tilde;
    sp.psi = pop.psi.col(k);
    sp.pi_tilde = pi_tilde_vector(sigma, sp.sigma_tilde);
    sp.sqrt_sigma_psi = sigma.apply_sqrt(sp.psi);
    sp.sigma_psi = sigma.apply(sp.psi);
    sp.s_top_psi = s.transpose_times(sp.psi);
    const double root_theta = std::sqrt(sp.theta);
    sp.u = root_theta * (sp.psi + sp.m_theta * sp.sigma_psi);
    sp.v = sp.s_top_psi;
    const Vector ut_psi = u_factor.transpose() * sp.psi;
    const Index kk = s.rank();
    sp.xi.resize(2 * kk);
    sp.xi.head(kk) = -root_theta * sp.m_theta * d2.cwiseProduct(ut_psi);
    sp.xi.tail(kk) = s.singular_values().cwiseProduct(ut_psi);
    sp.shift = 2.0 * th.kappa3 * sp.theta_prime / dn * sp.pi_tilde.dot(sp.sqrt_sigma_psi) *
               sp.s_top_psi.sum();
    th.spikes.push_back(std::move(sp));
  }

  th.v010 = Matrix::Zero(k0, k0);
  th.v120 = Matrix::Zero(k0, k0);
  th.w = Matrix::Zero(k0, k0);
  for (Index k = 0; k < k0; ++k) {
    const Spike& a = th.spikes[static_cast<std::size_t>(k)];
    for (Index j = k; j < k0; ++j) {
      const Spike& b = th.spikes[static_cast<std::size_t>(j)];
      double v010;
      if (k == j) {
        const double q = a.psi.dot(a.sigma_psi);
        const double tp = a.theta_prime;
        const double st2 = a.sigma_tilde * a.sigma_tilde;
        v010 = 2.0 * tp * tp * q * q + 2.0 * st2 * tp - 2.0 * st2 * tp * tp;
      } else {
        const double q = a.psi.dot(b.sigma_psi);
        v010 = 2.0 * a.theta_prime * b.theta_prime * q * q;
      }
      const double v120 =
          th.kappa4 * a.theta_prime * b.theta_prime / dn *
          (dn * mixed_moment(a.sqrt_sigma_psi, 2, b.sqrt_sigma_psi, 2) +
           a.pi_tilde.dot(b.pi_tilde) * mixed_moment(a.s_top_psi, 2, b.s_top_psi, 2));
      th.v010(k, j) = th.v010(j, k) = v010;
      th.v120(k, j) = th.v120(j, k) = v120;
    }
    for (Index j = 0; j < k0; ++j) {
      const Spike& b = th.spikes[static_cast<std::size_t>(j)];
      th.w(k, j) = 2.0 * th.kappa3 * a.theta_prime * b.theta_prime / std::sqrt(dn) *
                   (b.s_top_psi.sum() * mixed_moment(a.sqrt_sigma_psi, 2, b.sqrt_sigma_psi, 1) +
                    a.pi_tilde.dot(b.sqrt_sigma_psi) * mixed_moment(a.s_top_psi, 2, b.s_top_psi, 1));
    }
  }
  th.v = th.v010 + th.v120;
  return th;
}

/// One compared quantity in the Sigma = I reduction check.
struct ReductionEntry {
  std::string name;
  double general;
  double closed_form;
};

struct ReductionReport {
  std::vector<ReductionEntry> entries;
  double max_discrepancy = 0.0;
};

/// For Sigma = I, re-derives theta, theta', L, V^(0,1,0), V^(1,2,0) and W
/// from the closed forms in terms of (d_k, u_k, v_k) and compares them with
/// the general path.
inline ReductionReport sigma_identity_reduction_check(const CovarianceModel& sigma, const SignalModel& s,
                                                      const DeformedPopulation& pop, const NoiseLaw& law) {
  if (!sigma.is_identity()) throw InvalidArgument("reduction check requires the identity covariance");
  ReductionReport rep;
  if (pop.k0 == 0) return rep;
  const Vector& d = s.singular_values();
  for (Index i = 0; i + 1 < d.size(); ++i) {
    if (!(d[i] > d[i + 1])) throw InvalidArgument("reduction check requires distinct singular values");
  }
  const SpikeTheory th = asymptotic_quantities(sigma, s, pop, law);
  const double phi = pop.phi;
  const double dn = static_cast<double>(s.cols());
  const double dm = static_cast<double>(s.rows());
  const double k3 = law.kappa3(), k4 = law.kappa4();
  const Index k0 = pop.k0;
  std::vector<double> theta(static_cast<std::size_t>(k0)), tp(static_cast<std::size_t>(k0));
  auto add = [&](std::string name, double general, double closed) {
    rep.max_discrepancy = std::max(rep.max_discrepancy, std::abs(general - closed));
    rep.entries.push_back({std::move(name), general, closed});
  };
  for (Index k = 0; k < k0; ++k) {
    const double d2 = d[k] * d[k];
    theta[static_cast<std::size_t>(k)] = 1.0 + d2 + phi * (1.0 + 1.0 / d2);
    tp[static_cast<std::size_t>(k)] = 1.0 - phi / (d2 * d2);
    const auto& sp = th.spikes[static_cast<std::size_t>(k)];
    const std::string idx = std::to_string(k + 1);
    add("theta_" + idx, sp.theta, theta[static_cast<std::size_t>(k)]);
    add("theta_prime_" + idx, sp.theta_prime, tp[static_cast<std::size_t>(k)]);
    const Vector uk = s.left().col(k);
    const Vector vk = s.right().col(k);
    add("L_" + idx, sp.shift, 2.0 * k3 * tp[static_cast<std::size_t>(k)] / (dn * d[k]) * uk.sum() * vk.sum());
  }
  for (Index k = 0; k < k0; ++k) {
    const Vector uk = s.left().col(k);
    const Vector vk = s.right().col(k);
    const double tk = tp[static_cast<std::size_t>(k)];
    for (Index j = 0; j < k0; ++j) {
      const Vector uj = s.left().col(j);
      const Vector vj = s.right().col(j);
      const double tj = tp[static_cast<std::size_t>(j)];
      const std::string idx = std::to_string(k + 1) + std::to_string(j + 1);
      const double v010 = k == j ? 2.0 * tk * (1.0 + phi + 2.0 * phi / (d[k] * d[k])) : 0.0;
      const double v120 = k4 * tk * tj / dn *
                          (dn * mixed_moment(uk, 2, uj, 2) + dm * mixed_moment(vk, 2, vj, 2));
      const double w = 2.0 * k3 * tk * tj * d[j] / std::sqrt(dn) *
                       (vj.sum() * mixed_moment(uk, 2, uj, 1) + uj.sum() * mixed_moment(vk, 2, vj, 1));
      add("V010_" + idx, th.v010(k, j), v010);
      add("V120_" + idx, th.v120(k, j), v120);
      add("W_" + idx, th.w(k, j), w);
    }
  }
  return rep;
}

/// Exact characteristic function E exp(i sum_k t_k Theta_k) for
/// Theta_k = 2 sqrt(N) theta'_k (Sigma^{1/2} psi_k)^T X (S^T psi_k):
/// the product over entries of cf(c_{i mu} / sqrt(N)).
inline Complex theta_component_cf(std::span<const double> t, const SpikeTheory& th, const NoiseLaw& law) {
  if (static_cast<Index>(t.size()) != th.k0()) throw InvalidArgument("one coefficient per spike expected");
  if (!law.has_cf()) throw CapabilityError("noise law '" + law.name() + "' has no characteristic function");
  const double rn = std::sqrt(static_cast<double>(th.n));
  Matrix c = Matrix::Zero(th.m, th.n);
  bool any = false;
  for (Index k = 0; k < th.k0(); ++k) {
    const double tk = t[static_cast<std::size_t>(k)];
    if (tk == 0.0) continue;
    any = true;
    const Spike& sp = th.spikes[static_cast<std::size_t>(k)];
    c.noalias() += (tk * 2.0 * rn * sp.theta_prime) * sp.sqrt_sigma_psi * sp.s_top_psi.transpose();
  }
  if (!any) return {1.0, 0.0};
  Complex prod{1.0, 0.0};
  const double* p = c.data();
  for (Index i = 0; i < c.size(); ++i) {
    if (p[i] == 0.0) continue;
    prod *= law.cf(p[i] / rn);
  }
  return prod;
}

struct DelocalizationEntry {
  double sqrt_sigma_psi_sup;  // ||Sigma^{1/2} psi_k||_inf
  double s_top_psi_sup;       // ||S^T psi_k||_inf
  double min() const { return std::min(sqrt_sigma_psi_sup, s_top_psi_sup); }
};

/// Sup-norms deciding whether Theta_k is asymptotically Gaussian (small
/// minimum) or carries the entry law (order-one minimum).
inline std::vector<DelocalizationEntry> delocalization_profile(const SpikeTheory& th) {
  std::vector<DelocalizationEntry> out;
  for (const Spike& sp : th.spikes) {
    out.push_back({sp.sqrt_sigma_psi.cwiseAbs().maxCoeff(), sp.s_top_psi.cwiseAbs().maxCoeff()});
  }
  return out;
}

}  // namespace spikefluct::spikes
