#pragma once

// Numerical checks of the resolvent machinery behind the spike fluctuation
// limits, for the undeformed Y = Sigma^{1/2} X and its linearization
//
//     H(z) = [[0, sqrt(z) Y], [sqrt(z) Y^T, 0]],   G(z) = (H(z) - z)^{-1}.
//
// Only real z to the right of the spectrum are used. G is never formed
// densely in the checks: one eigendecomposition Y Y^T = Q L Q^T per sample
// gives G_M(z) = Q (L - z)^{-1} Q^T for every z, and the remaining blocks
// follow from
//
//     G = [[G_M, z^{-1/2} G_M Y], [z^{-1/2} Y^T G_M, G_N]],
//     G_N = z^{-1} (Y^T G_M Y - I).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spikefluct/ensemble.hpp"
#include "spikefluct/error.hpp"
#include "spikefluct/linalg.hpp"
#include "spikefluct/parallel.hpp"
#include "spikefluct/rng.hpp"
#include "spikefluct/spectra.hpp"
#include "spikefluct/spikes.hpp"
#include "spikefluct/stats.hpp"
#include "spikefluct/stieltjes.hpp"

namespace spikefluct::locallaw {

using spectra::CovarianceModel;
using spectra::SpectralDistribution;
using spikes::SignalModel;
using spikes::SpikeTheory;

inline constexpr double kEdgeMargin = 0.05;
inline constexpr double kNormGuard = 1e3;

/// f(Sigma) u for a scalar function f of the eigenvalues.
template <typename F>
Vector spectral_apply(const CovarianceModel& sigma, F&& f, const Vector& u) {
  if (sigma.is_identity()) return f(1.0) * u;
  const Matrix& q = sigma.eigenvectors();
  const Vector& ev = sigma.eigenvalues();
  Vector c = q.transpose() * u;
  for (Index i = 0; i < c.size(); ++i) c[i] *= f(ev[i]);
  return q * c;
}

/// The deterministic equivalent Pi(z) = diag(Pi_M, Pi_N) with
/// Pi_M = -z^{-1}(I + m Sigma)^{-1}, Pi_N = m I, and its derivatives.
class DeterministicEquivalent {
 public:
  DeterministicEquivalent(const CovarianceModel& sigma, Index n, double z)
      : DeterministicEquivalent(sigma, n, z, spectra::esd(sigma)) {}

  DeterministicEquivalent(const CovarianceModel& sigma, Index n, double z, const SpectralDistribution& nu)
      : DeterministicEquivalent(sigma, n, z, nu,
                                stieltjes::find_w_plus(nu, static_cast<double>(sigma.dim()) / static_cast<double>(n))) {}

  DeterministicEquivalent(const CovarianceModel& sigma, Index n, double z, const SpectralDistribution& nu,
                          const stieltjes::EdgeData& edge)
      : sigma_(&sigma), n_(n), z_(z), phi_(edge.phi), edge_(edge) {
    m_ = stieltjes::solve_m(z, nu, phi_, edge);
    m_prime_ = stieltjes::m_derivative(z, nu, phi_, edge);
  }

  double z() const { return z_; }
  double m() const { return m_; }
  double m_prime() const { return m_prime_; }
  Index dim_m() const { return sigma_->dim(); }
  Index dim_n() const { return n_; }
  const stieltjes::EdgeData& edge() const { return edge_; }
  const CovarianceModel& sigma() const { return *sigma_; }

  /// Spectral symbol of Pi_M: s -> -1/(z (1 + m s)).
  double pi_m_symbol(double s) const { return -1.0 / (z_ * (1.0 + m_ * s)); }

  Vector pi_m(const Vector& u) const {
    return spectral_apply(*sigma_, [&](double s) { return pi_m_symbol(s); }, u);
  }
  /// Pi_M Sigma Pi_M(z*) u for a second equivalent at z*.
  Vector pi_m_sigma_pi_m(const DeterministicEquivalent& star, const Vector& u) const {
    return spectral_apply(*sigma_, [&](double s) { return pi_m_symbol(s) * s * star.pi_m_symbol(s); }, u);
  }
  Vector pi_prime_m(const Vector& u) const {
    return spectral_apply(*sigma_, [&](double s) {
      const double p = pi_m_symbol(s);
      return z_ * m_prime_ * p * p * s - p / z_;
    }, u);
  }
  Vector pi2_m(const Vector& u) const {
    return spectral_apply(*sigma_, [&](double s) {
      const double p = pi_m_symbol(s);
      return 2.0 * z_ * m_prime_ * p * p * s - p / z_;
    }, u);
  }

  /// Pi w, Pi' w and Pi_2 w for w in R^{M+N}.
  Vector apply(const Vector& w) const { return stack(pi_m(head(w)), m_ * tail(w)); }
  Vector apply_prime(const Vector& w) const { return stack(pi_prime_m(head(w)), m_prime_ * tail(w)); }
  Vector apply_pi2(const Vector& w) const {
    return stack(pi2_m(head(w)), (2.0 * m_prime_ + m_ / z_) * tail(w));
  }

  /// N^{-1} tr(Pi_M Sigma) and N^{-1} tr(Pi_N).
  double trace_pi_m_sigma() const {
    const Vector& ev = sigma_->eigenvalues();
    stats::CompensatedSum acc;
    for (Index i = 0; i < ev.size(); ++i) acc.add(pi_m_symbol(ev[i]) * ev[i]);
    return static_cast<double>(acc.value()) / static_cast<double>(n_);
  }
  double trace_pi_n() const { return m_; }

  Matrix pi_m_dense() const {
    const Matrix& q = sigma_->eigenvectors();
    Vector d(sigma_->dim());
    for (Index i = 0; i < d.size(); ++i) d[i] = pi_m_symbol(sigma_->eigenvalues()[i]);
    return q * d.asDiagonal() * q.transpose();
  }

 private:
  Vector head(const Vector& w) const { return w.head(sigma_->dim()); }
  Vector tail(const Vector& w) const { return w.tail(n_); }
  static Vector stack(const Vector& a, const Vector& b) {
    Vector out(a.size() + b.size());
    out << a, b;
    return out;
  }

  const CovarianceModel* sigma_;
  Index n_;
  double z_, phi_;
  stieltjes::EdgeData edge_;
  double m_ = 0.0, m_prime_ = 0.0;
};

/// Y = Sigma^{1/2} X with the eigendecomposition of Y Y^T (ascending).
class SampleSpectrum {
 public:
  explicit SampleSpectrum(Matrix y) : y_(std::move(y)) {
    Matrix gram = Matrix::Zero(y_.rows(), y_.rows());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(y_);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(gram);
    if (solver.info() != Eigen::Success) throw NumericalError("sample eigendecomposition did not converge");
    values_ = solver.eigenvalues();
    vectors_ = solver.eigenvectors();
  }
  const Matrix& y() const { return y_; }
  const Vector& values() const { return values_; }
  const Matrix& vectors() const { return vectors_; }
  Index m() const { return y_.rows(); }
  Index n() const { return y_.cols(); }

 private:
  Matrix y_;
  Vector values_;
  Matrix vectors_;
};

/// G(z) for one sample and one real z, applied matrix-free.
class ResolventBundle {
 public:
  ResolventBundle(std::shared_ptr<const SampleSpectrum> spectrum, double z, bool guard = true)
      : spec_(std::move(spectrum)), z_(z), rz_(std::sqrt(z)) {
    if (!(z > 0.0)) throw DomainError("spectral parameter must be positive");
    norm_ = 1.0 / z;
    for (Index i = 0; i < spec_->values().size(); ++i) {
      const double lam = std::max(spec_->values()[i], 0.0);
      const double gap = std::abs(std::sqrt(z * lam) - z);
      norm_ = std::max(norm_, gap > 0.0 ? 1.0 / gap : std::numeric_limits<double>::infinity());
    }
    if (guard && !(norm_ <= kNormGuard)) {
      std::ostringstream msg;
      msg << "||G(" << z << ")|| = " << norm_ << " exceeds " << kNormGuard;
      throw ConditioningError(msg.str());
    }
  }

  double z() const { return z_; }
  Index m() const { return spec_->m(); }
  Index n() const { return spec_->n(); }
  double norm() const { return norm_; }
  const SampleSpectrum& spectrum() const { return *spec_; }

  /// G_M u = (Y Y^T - z)^{-1} u.
  Vector g_m(const Vector& u) const {
    const Matrix& q = spec_->vectors();
    Vector c = q.transpose() * u;
    for (Index i = 0; i < c.size(); ++i) c[i] /= spec_->values()[i] - z_;
    return q * c;
  }

  /// G w for w = [a; b], a in R^M, b in R^N.
  Vector apply(const Vector& w) const {
    const Index mm = m(), nn = n();
    const Matrix& y = spec_->y();
    Vector top = g_m(w.head(mm) + (y * w.tail(nn)) / rz_);
    Vector out(mm + nn);
    out.head(mm) = top;
    out.tail(nn) = (y.transpose() * top) / rz_ - w.tail(nn) / z_;
    return out;
  }

  /// (H(z) - z) w.
  Vector apply_h_minus_z(const Vector& w) const {
    const Index mm = m(), nn = n();
    const Matrix& y = spec_->y();
    Vector out(mm + nn);
    out.head(mm) = rz_ * (y * w.tail(nn)) - z_ * w.head(mm);
    out.tail(nn) = rz_ * (y.transpose() * w.head(mm)) - z_ * w.tail(nn);
    return out;
  }

  Matrix g_m_dense() const {
    const Matrix& q = spec_->vectors();
    Vector d = (spec_->values().array() - z_).inverse();
    return q * d.asDiagonal() * q.transpose();
  }

  /// G_N = z^{-1}(Y^T G_M Y - I).
  Matrix g_n_dense() const {
    const Matrix& y = spec_->y();
    return (y.transpose() * g_m_dense() * y - Matrix::Identity(n(), n())) / z_;
  }

  Matrix dense() const {
    const Index mm = m(), nn = n();
    const Matrix gm = g_m_dense();
    const Matrix off = gm * spec_->y() / rz_;
    Matrix g(mm + nn, mm + nn);
    g.topLeftCorner(mm, mm) = gm;
    g.topRightCorner(mm, nn) = off;
    g.bottomLeftCorner(nn, mm) = off.transpose();
    g.bottomRightCorner(nn, nn) = g_n_dense();
    return g;
  }

  /// N^{-1} tr G_N = (N z)^{-1} (sum_i l_i / (l_i - z) - N).
  double trace_g_n() const {
    stats::CompensatedSum acc;
    for (Index i = 0; i < spec_->values().size(); ++i) {
      const double l = spec_->values()[i];
      acc.add(l / (l - z_));
    }
    return (static_cast<double>(acc.value()) - static_cast<double>(n())) / (z_ * static_cast<double>(n()));
  }

 private:
  std::shared_ptr<const SampleSpectrum> spec_;
  double z_, rz_;
  double norm_ = 0.0;
};

/// Builds G(z) for Y = Sigma^{1/2} X. Requires z >= lambda_+ + 0.05.
inline ResolventBundle build_resolvent(const Matrix& x, const CovarianceModel& sigma, double z,
                                       const stieltjes::EdgeData& edge) {
  if (!(z >= edge.lambda_plus + kEdgeMargin)) {
    std::ostringstream msg;
    msg << "z = " << z << " is closer than " << kEdgeMargin << " to the spectral edge " << edge.lambda_plus;
    throw DomainError(msg.str());
  }
  return ResolventBundle(std::make_shared<const SampleSpectrum>(sigma.apply_sqrt(x)), z);
}

inline Vector embed_m(const Vector& u, Index n) {
  Vector w = Vector::Zero(u.size() + n);
  w.head(u.size()) = u;
  return w;
}
inline Vector embed_n(const Vector& v, Index m) {
  Vector w = Vector::Zero(m + v.size());
  w.tail(v.size()) = v;
  return w;
}

/// |p^T (G - Pi) q|.
inline double isotropic_residual(const ResolventBundle& g, const DeterministicEquivalent& pi, const Vector& p,
                                 const Vector& q) {
  return std::abs(p.dot(g.apply(q)) - p.dot(pi.apply(q)));
}

/// |p^T G^2 q - p^T Pi_2 q|.
inline double g2_residual(const ResolventBundle& g, const DeterministicEquivalent& pi, const Vector& p,
                          const Vector& q) {
  return std::abs(g.apply(p).dot(g.apply(q)) - p.dot(pi.apply_pi2(q)));
}

/// Residuals of the six two-resolvent forms, for u in R^M and v in R^N.
struct TwoResolventResiduals {
  double u_wm_u, v_wm_v, u_wm_v;
  double u_wn_u, v_wn_v, u_wn_v;

  std::vector<std::pair<std::string, double>> named() const {
    return {{"uWMu", u_wm_u}, {"vWMv", v_wm_v}, {"uWMv", u_wm_v},
            {"uWNu", u_wn_u}, {"vWNv", v_wn_v}, {"uWNv", u_wn_v}};
  }
};

/// m[z, z*] / (m m*) and the other scalar prefactors of the two-resolvent
/// equivalents, from the real-axis solver.
inline TwoResolventResiduals two_resolvent_residual(const ResolventBundle& gz, const DeterministicEquivalent& pz,
                                                    const ResolventBundle& gs, const DeterministicEquivalent& ps,
                                                    const CovarianceModel& sigma, const SpectralDistribution& nu,
                                                    const Vector& u, const Vector& v) {
  const Index m = gz.m(), n = gz.n();
  const double z = pz.z(), zs = ps.z();
  const double mz = pz.m(), ms = ps.m();
  const double phi = static_cast<double>(m) / static_cast<double>(n);
  const double mdd = z == zs ? pz.m_prime() : 1.0 / stieltjes::f_divided_difference(mz, ms, nu, phi);
  const double ratio = mdd / (mz * ms);
  const double rzz = std::sqrt(z * zs);

  const Vector gu = gz.apply(embed_m(u, n)), gsu = gs.apply(embed_m(u, n));
  const Vector gv = gz.apply(embed_n(v, m)), gsv = gs.apply(embed_n(v, m));
  const auto w_m = [&](const Vector& a, const Vector& b) {
    const Matrix sb = sigma.apply(Matrix(b.head(m)));
    return a.head(m).dot(sb.col(0));
  };
  const auto w_n = [&](const Vector& a, const Vector& b) { return a.tail(n).dot(b.tail(n)); };
  const double upu = u.dot(pz.pi_m_sigma_pi_m(ps, u));
  const double vv = v.squaredNorm();

  TwoResolventResiduals r{};
  r.u_wm_u = std::abs(w_m(gu, gsu) - ratio * upu);
  r.v_wm_v = std::abs(w_m(gv, gsv) - (ratio - 1.0) / rzz * vv);
  r.u_wm_v = std::abs(w_m(gu, gsv));
  r.u_wn_u = std::abs(w_n(gu, gsu) - rzz * mdd * upu);
  r.v_wn_v = std::abs(w_n(gv, gsv) - mdd * vv);
  r.u_wn_v = std::abs(w_n(gu, gsv));
  return r;
}

/// Columns of the (M+N) x 2K block matrix diag(U, V).
inline Matrix frak_u(const SignalModel& s) {
  const Index m = s.rows(), n = s.cols(), k = s.rank();
  Matrix out = Matrix::Zero(m + n, 2 * k);
  out.topLeftCorner(m, k) = s.left();
  out.bottomRightCorner(n, k) = s.right();
  return out;
}

/// [[0, D^{-1}], [D^{-1}, 0]].
inline Matrix frak_d_inverse(const SignalModel& s) {
  const Index k = s.rank();
  Matrix out = Matrix::Zero(2 * k, 2 * k);
  for (Index i = 0; i < k; ++i) {
    out(i, k + i) = 1.0 / s.singular_values()[i];
    out(k + i, i) = 1.0 / s.singular_values()[i];
  }
  return out;
}

/// A_G(z) = sqrt(z) U^T G(z) U + D^{-1}, symmetrized.
inline Matrix a_g(const ResolventBundle& g, const SignalModel& s) {
  const Matrix u = frak_u(s);
  Matrix gu(u.rows(), u.cols());
  for (Index c = 0; c < u.cols(); ++c) gu.col(c) = g.apply(u.col(c));
  Matrix a = std::sqrt(g.z()) * (u.transpose() * gu) + frak_d_inverse(s);
  return 0.5 * (a + a.transpose());
}

inline Matrix a_pi(const DeterministicEquivalent& pi, const SignalModel& s) {
  const Matrix u = frak_u(s);
  Matrix pu(u.rows(), u.cols());
  for (Index c = 0; c < u.cols(); ++c) pu.col(c) = pi.apply(u.col(c));
  Matrix a = std::sqrt(pi.z()) * (u.transpose() * pu) + frak_d_inverse(s);
  return 0.5 * (a + a.transpose());
}

/// B_Pi(z) = z U^T Pi_2(z) U.
inline Matrix b_pi(const DeterministicEquivalent& pi, const SignalModel& s) {
  const Matrix u = frak_u(s);
  Matrix pu(u.rows(), u.cols());
  for (Index c = 0; c < u.cols(); ++c) pu.col(c) = pi.apply_pi2(u.col(c));
  Matrix b = pi.z() * (u.transpose() * pu);
  return 0.5 * (b + b.transpose());
}

/// Deterministic master-matrix facts for one supercritical spike.
struct MasterSpikeReport {
  double null_residual;   // ||A_Pi(theta) xi|| / ||xi||
  double b_form;          // xi^T B_Pi(theta) xi
  double b_form_expected; // 2 theta / (sigma~ theta')
  double det_contrast;    // min |det A_Pi(theta +- 0.1)| / |det A_Pi(theta)|
  double m_theta_error;   // |m(theta) + 1/sigma~|
};

inline std::vector<MasterSpikeReport> master_matrix_deterministic(const CovarianceModel& sigma,
                                                                  const SignalModel& s,
                                                                  const SpikeTheory& theory) {
  const SpectralDistribution nu = spectra::esd(sigma);
  const double phi = theory.phi;
  const stieltjes::EdgeData edge = stieltjes::find_w_plus(nu, phi);
  std::vector<MasterSpikeReport> out;
  for (const auto& sp : theory.spikes) {
    MasterSpikeReport r{};
    const DeterministicEquivalent pi(sigma, theory.n, sp.theta, nu, edge);
    const Matrix a = a_pi(pi, s);
    r.null_residual = (a * sp.xi).norm() / sp.xi.norm();
    r.b_form = sp.xi.dot(b_pi(pi, s) * sp.xi);
    r.b_form_expected = 2.0 * sp.theta / (sp.sigma_tilde * sp.theta_prime);
    r.m_theta_error = std::abs(pi.m() + 1.0 / sp.sigma_tilde);
    const double det0 = std::abs(a.fullPivLu().determinant());
    double side = std::numeric_limits<double>::infinity();
    for (const double h : {-0.1, 0.1}) {
      const double zz = sp.theta + h;
      if (zz < edge.lambda_plus + 1e-8) continue;
      const DeterministicEquivalent ph(sigma, theory.n, zz, nu, edge);
      side = std::min(side, std::abs(a_pi(ph, s).fullPivLu().determinant()));
    }
    r.det_contrast = det0 > 0.0 ? side / det0 : std::numeric_limits<double>::infinity();
    out.push_back(r);
  }
  return out;
}

/// Smallest |eigenvalue| of A_G(lambda) at a sample spike lambda of
/// (S + Y)(S + Y)^T; zero up to rounding.
inline double a_g_min_abs_eigenvalue(std::shared_ptr<const SampleSpectrum> spectrum, const SignalModel& s,
                                     double lambda) {
  const ResolventBundle g(std::move(spectrum), lambda, false);
  const Vector ev = symmetric_eigenvalues_desc(a_g(g, s));
  return ev.cwiseAbs().minCoeff();
}

/// |sqrt(N)(lambda_k - theta_k) + sqrt(N) sigma~ theta' [u; v]^T (G - Pi)(theta_k) [u; v]|.
inline double green_rep_residual(std::shared_ptr<const SampleSpectrum> spectrum, const CovarianceModel& sigma,
                                 const SpikeTheory& theory, Index k, double lambda,
                                 const SpectralDistribution& nu, const stieltjes::EdgeData& edge) {
  const auto& sp = theory.spikes[static_cast<std::size_t>(k)];
  const ResolventBundle g(std::move(spectrum), sp.theta);
  const DeterministicEquivalent pi(sigma, theory.n, sp.theta, nu, edge);
  Vector w(sp.u.size() + sp.v.size());
  w << sp.u, sp.v;
  const double form = w.dot(g.apply(w)) - w.dot(pi.apply(w));
  const double rn = std::sqrt(static_cast<double>(theory.n));
  return std::abs(rn * (lambda - sp.theta) + rn * sp.sigma_tilde * sp.theta_prime * form);
}

/// One verification check: `value` must lie in [lower, upper].
struct Check {
  std::string name;
  double value;
  double lower;
  double upper;
  bool pass;
  std::string detail;
};

inline Check make_check(std::string name, double value, double lower, double upper, std::string detail = {}) {
  const bool pass = std::isfinite(value) && value >= lower && value <= upper;
  return {std::move(name), value, lower, upper, pass, std::move(detail)};
}

struct VerificationReport {
  std::vector<Check> checks;
  Index n_small = 0, n_large = 0, seeds = 0, skipped = 0;
  std::uint64_t master_seed = 0;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

struct VerificationOptions {
  Index n = 200;              // smaller sample size; the larger one is 4n
  double phi = 0.5;
  Index seeds = 50;
  Index probes = 8;           // probe pairs per seed for the isotropic-type residuals
  std::uint64_t master_seed = 20240601;
  unsigned threads = 0;
  spectra::CovarianceRecipe recipe = spectra::CovarianceRecipe::toeplitz(0.1);
  std::vector<double> d2 = {6.0, 3.0};  // squared signal strengths, localized on e_1, e_2
  double factor_lower = 1.4;
  double factor_upper = 2.8;
};

namespace detail {

inline Vector random_unit(Stream& st, Index len) {
  Vector v(len);
  for (Index i = 0; i < len; ++i) v[i] = st.normal();
  return v / v.norm();
}

inline SignalModel localized_signal(Index m, Index n, const std::vector<double>& d2) {
  const Index k = static_cast<Index>(d2.size());
  Matrix u = Matrix::Zero(m, k), v = Matrix::Zero(n, k);
  Vector d(k);
  for (Index i = 0; i < k; ++i) {
    u(i, i) = 1.0;
    v(i, i) = 1.0;
    d[i] = std::sqrt(d2[static_cast<std::size_t>(i)]);
  }
  return SignalModel::from_factors(u, d, v);
}

/// Per-seed measurements at one size.
struct SeedMetrics {
  bool skipped = false;
  std::map<std::string, double> scaling;  // residuals entering the N-vs-4N protocol
  std::vector<double> fluctuation;        // sqrt(N)(lambda_k - theta_k)
  double inverse_residual = 0.0;
  double a_g_min = 0.0;
  double average_law = 0.0;
};

inline double rms(const std::vector<double>& xs) {
  long double acc = 0.0L;
  for (const double x : xs) acc += static_cast<long double>(x) * x;
  return static_cast<double>(std::sqrt(acc / static_cast<long double>(xs.size())));
}

}  // namespace detail

/// The local-law verification suite: deterministic identities plus the
/// N-vs-4N median scaling protocol for every O(N^{-1/2}) residual.
inline VerificationReport run_verification(const VerificationOptions& opt) {
  if (opt.seeds < 1 || opt.n < 2) throw InvalidArgument("verification needs n >= 2 and seeds >= 1");
  VerificationReport rep;
  rep.n_small = opt.n;
  rep.n_large = 4 * opt.n;
  rep.seeds = opt.seeds;
  rep.master_seed = opt.master_seed;

  std::map<std::string, double> medians[2];
  for (int size = 0; size < 2; ++size) {
    const Index n = size == 0 ? opt.n : 4 * opt.n;
    const Index m = std::max<Index>(1, static_cast<Index>(std::llround(opt.phi * static_cast<double>(n))));
    const CovarianceModel sigma = spectra::make_covariance(opt.recipe, m, opt.master_seed);
    const SpectralDistribution nu = spectra::esd(sigma);
    const double phi = static_cast<double>(m) / static_cast<double>(n);
    const stieltjes::EdgeData edge = stieltjes::find_w_plus(nu, phi);
    const SignalModel signal = detail::localized_signal(m, n, opt.d2);
    const spikes::DeformedPopulation pop = spikes::deform(sigma, signal, 0.1);
    const SpikeTheory theory = spikes::asymptotic_quantities(sigma, signal, pop, ensemble::NoiseLaw::gaussian());
    const double z1 = edge.lambda_plus + 1.0;
    const double z2 = edge.lambda_plus + 2.0;
    const DeterministicEquivalent p1(sigma, n, z1, nu, edge);
    const DeterministicEquivalent p2(sigma, n, z2, nu, edge);
    const Matrix signal_dense = signal.dense();
    const std::string tag = "[N=" + std::to_string(n) + "]";

    if (size == 0) {
      // Deterministic identities.
      const auto master = master_matrix_deterministic(sigma, signal, theory);
      double null_res = 0.0, b_err = 0.0, contrast = std::numeric_limits<double>::infinity(), m_err = 0.0;
      for (const auto& r : master) {
        null_res = std::max(null_res, r.null_residual);
        b_err = std::max(b_err, std::abs(r.b_form - r.b_form_expected) / std::abs(r.b_form_expected));
        contrast = std::min(contrast, r.det_contrast);
        m_err = std::max(m_err, r.m_theta_error);
      }
      rep.checks.push_back(make_check("A_Pi(theta_k) xi_k = 0 (relative)", null_res, 0.0, 1e-8));
      rep.checks.push_back(make_check("xi^T B_Pi xi = 2 theta/(sigma~ theta') (relative)", b_err, 0.0, 1e-8));
      rep.checks.push_back(make_check("det A_Pi contrast at theta_k +- 0.1", contrast, 1e3,
                                      std::numeric_limits<double>::infinity()));
      rep.checks.push_back(make_check("m(theta_k) = -1/sigma~_k", m_err, 0.0, 1e-10));

      Stream probe(opt.master_seed, stream_id({0x10CA1, 99}));
      double fd_err = 0.0;
      for (const double z : {z1, z2}) {
        const double h = 1e-4;
        const DeterministicEquivalent pc(sigma, n, z, nu, edge);
        const DeterministicEquivalent pp(sigma, n, z + h, nu, edge);
        const DeterministicEquivalent pmn(sigma, n, z - h, nu, edge);
        const Vector u = detail::random_unit(probe, m);
        const Vector fd = (pp.pi_m(u) - pmn.pi_m(u)) / (2.0 * h);
        fd_err = std::max(fd_err, (fd - pc.pi_prime_m(u)).norm() / pc.pi_prime_m(u).norm());
        fd_err = std::max(fd_err, std::abs((pp.m() - pmn.m()) / (2.0 * h) - pc.m_prime()) / std::abs(pc.m_prime()));
      }
      rep.checks.push_back(make_check("Pi' matches central differences (relative)", fd_err, 0.0, 1e-6));
      const double trace_err =
          std::max(std::abs(p1.trace_pi_m_sigma() + (1.0 + z1 * p1.m()) / (z1 * p1.m())),
                   std::abs(p1.trace_pi_n() - p1.m()));
      rep.checks.push_back(make_check("trace identities of Pi", trace_err, 0.0, 1e-10));
      const Vector w = detail::random_unit(probe, m + n);
      const double pi2_err = (p1.apply_pi2(w) - 2.0 * p1.apply_prime(w) - p1.apply(w) / z1).norm();
      rep.checks.push_back(make_check("Pi_2 = 2 Pi' + Pi/z", pi2_err, 0.0, 1e-12));
    }

    std::vector<detail::SeedMetrics> metrics(static_cast<std::size_t>(opt.seeds));
    parallel_for(static_cast<std::size_t>(opt.seeds), opt.threads, [&](std::size_t i) {
      detail::SeedMetrics& out = metrics[i];
      Stream noise(opt.master_seed, stream_id({0x10CA1, static_cast<std::uint64_t>(size), i, 0}));
      Stream probe(opt.master_seed, stream_id({0x10CA1, static_cast<std::uint64_t>(size), i, 1}));
      Matrix x(m, n);
      ensemble::NoiseLaw::gaussian().fill(noise, x, 1.0 / std::sqrt(static_cast<double>(n)));
      auto spectrum = std::make_shared<const SampleSpectrum>(sigma.apply_sqrt(x));
      try {
        const ResolventBundle g1(spectrum, z1), g2(spectrum, z2);
        std::vector<double> iso, sq;
        std::map<std::string, std::vector<double>> two;
        for (Index p = 0; p < opt.probes; ++p) {
          const Vector a = detail::random_unit(probe, m + n);
          const Vector b = detail::random_unit(probe, m + n);
          iso.push_back(isotropic_residual(g1, p1, a, b));
          sq.push_back(g2_residual(g1, p1, a, b));
          const Vector u = detail::random_unit(probe, m);
          const Vector v = detail::random_unit(probe, n);
          for (const auto& [name, val] : two_resolvent_residual(g1, p1, g2, p2, sigma, nu, u, v).named()) {
            two[name].push_back(val);
          }
        }
        out.scaling["isotropic"] = detail::rms(iso);
        out.scaling["G^2"] = detail::rms(sq);
        for (const auto& [name, vals] : two) out.scaling["two-resolvent " + name] = detail::rms(vals);

        double inv = 0.0;
        for (Index c = 0; c < 4; ++c) {
          const Index col = probe.uniform() < 0.5 ? static_cast<Index>(probe.uniform() * static_cast<double>(m))
                                                  : m + static_cast<Index>(probe.uniform() * static_cast<double>(n));
          Vector e = Vector::Zero(m + n);
          e[col] = 1.0;
          Vector r = g1.apply_h_minus_z(g1.apply(e));
          r -= e;
          inv = std::max(inv, r.cwiseAbs().maxCoeff());
        }
        out.inverse_residual = inv;
        out.average_law = std::abs(g1.trace_g_n() - p1.m());

        const Matrix ytilde = spectrum->y() + signal_dense;
        const Vector lam = ensemble::top_eigs(ytilde, theory.k0());
        for (Index k = 0; k < theory.k0(); ++k) {
          const double res = green_rep_residual(spectrum, sigma, theory, k, lam[k], nu, edge);
          out.scaling["Green representation, spike " + std::to_string(k + 1)] = res;
          out.fluctuation.push_back(std::sqrt(static_cast<double>(n)) *
                                    (lam[k] - theory.spikes[static_cast<std::size_t>(k)].theta));
          out.a_g_min = std::max(out.a_g_min, a_g_min_abs_eigenvalue(spectrum, signal, lam[k]));
        }
      } catch (const ConditioningError&) {
        out.skipped = true;
      }
    });

    std::map<std::string, std::vector<double>> pooled;
    std::vector<std::vector<double>> fluct(static_cast<std::size_t>(theory.k0()));
    double inv = 0.0, agmin = 0.0;
    std::vector<double> avg;
    for (const auto& sm : metrics) {
      if (sm.skipped) {
        rep.skipped++;
        continue;
      }
      for (const auto& [name, val] : sm.scaling) pooled[name].push_back(val);
      for (std::size_t k = 0; k < sm.fluctuation.size(); ++k) fluct[k].push_back(sm.fluctuation[k]);
      inv = std::max(inv, sm.inverse_residual);
      agmin = std::max(agmin, sm.a_g_min);
      avg.push_back(sm.average_law);
    }
    for (const auto& [name, vals] : pooled) medians[size][name] = stats::median(vals);
    rep.checks.push_back(make_check("(H - z) G = I on sampled columns " + tag, inv, 0.0, 1e-8));
    rep.checks.push_back(make_check("min |eig A_G(lambda_k)| " + tag, agmin, 0.0, 1e-6));
    rep.checks.push_back(make_check("average law |<G_N> - m| (median) " + tag, stats::median(avg), 0.0,
                                    10.0 / static_cast<double>(n)));
    if (size == 1) {
      for (Index k = 0; k < theory.k0(); ++k) {
        const std::string name = "Green representation, spike " + std::to_string(k + 1);
        const double sd = std::sqrt(stats::variance(fluct[static_cast<std::size_t>(k)]));
        rep.checks.push_back(make_check(name + " median / sd of fluctuation " + tag,
                                        medians[1][name] / sd, 0.0, 0.25));
      }
    }
    if (size == 0) {
      // Block consistency of one dense resolvent at the smaller size.
      Stream noise(opt.master_seed, stream_id({0x10CA1, 7, 0}));
      Matrix x(m, n);
      ensemble::NoiseLaw::gaussian().fill(noise, x, 1.0 / std::sqrt(static_cast<double>(n)));
      const Matrix y = sigma.apply_sqrt(x);
      const ResolventBundle g(std::make_shared<const SampleSpectrum>(y), z1, false);
      const Matrix gn = (y.transpose() * y - z1 * Matrix::Identity(n, n)).inverse();
      const double err = max_abs(g.g_m_dense() * y - y * gn) / std::sqrt(z1);
      rep.checks.push_back(make_check("off-diagonal block z^{-1/2} G_M Y = z^{-1/2} Y G_N", err, 0.0, 1e-8));
    }
  }
  for (const auto& [name, small] : medians[0]) {
    const auto it = medians[1].find(name);
    if (it == medians[1].end()) continue;
    const double factor = small / it->second;
    std::ostringstream detail;
    detail << "median " << small << " -> " << it->second;
    rep.checks.push_back(make_check("N-vs-4N shrink factor: " + name, factor, opt.factor_lower,
                                    opt.factor_upper, detail.str()));
  }
  return rep;
}

}  // namespace spikefluct::locallaw
