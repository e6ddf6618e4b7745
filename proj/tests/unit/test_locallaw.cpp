#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "spikefluct/ensemble.hpp"
#include "spikefluct/locallaw.hpp"

using namespace spikefluct;
using spectra::CovarianceRecipe;

namespace {

struct Fixture {
  Index m = 60, n = 120;
  spectra::CovarianceModel sigma = spectra::make_covariance(CovarianceRecipe::toeplitz(0.3), 60);
  spectra::SpectralDistribution nu = spectra::esd(sigma);
  stieltjes::EdgeData edge = stieltjes::find_w_plus(nu, 0.5);
};

Matrix explicit_h_minus_z(const Matrix& y, double z) {
  const Index m = y.rows(), n = y.cols();
  Matrix h = Matrix::Zero(m + n, m + n);
  h.topRightCorner(m, n) = std::sqrt(z) * y;
  h.bottomLeftCorner(n, m) = std::sqrt(z) * y.transpose();
  h.diagonal().array() -= z;
  return h;
}

}  // namespace

TEST(DeterministicEquivalent, PiMatchesDenseInverse) {
  Fixture f;
  const double z = f.edge.lambda_plus + 1.0;
  const locallaw::DeterministicEquivalent pi(f.sigma, f.n, z);
  const Matrix ref = -(z * (Matrix::Identity(f.m, f.m) + pi.m() * f.sigma.matrix())).inverse();
  EXPECT_LT(max_abs(pi.pi_m_dense() - ref), 1e-12);
  // m solves f(m) = z.
  EXPECT_NEAR(stieltjes::f_eval(pi.m(), f.nu, 0.5).f, z, 1e-12);
}

TEST(DeterministicEquivalent, TraceIdentity) {
  Fixture f;
  for (const double dz : {0.5, 2.0}) {
    const double z = f.edge.lambda_plus + dz;
    const locallaw::DeterministicEquivalent pi(f.sigma, f.n, z);
    EXPECT_NEAR(pi.trace_pi_m_sigma(), -(1.0 + z * pi.m()) / (z * pi.m()), 1e-12);
    EXPECT_DOUBLE_EQ(pi.trace_pi_n(), pi.m());
  }
}

TEST(DeterministicEquivalent, DerivativesMatchFiniteDifferences) {
  Fixture f;
  const double z = f.edge.lambda_plus + 1.5, h = 1e-5;
  const locallaw::DeterministicEquivalent pi(f.sigma, f.n, z), up(f.sigma, f.n, z + h), dn(f.sigma, f.n, z - h);
  Stream s(1, 0);
  Vector w(f.m + f.n);
  for (Index i = 0; i < w.size(); ++i) w[i] = s.normal();
  const Vector fd = (up.apply(w) - dn.apply(w)) / (2.0 * h);
  EXPECT_LT((pi.apply_prime(w) - fd).norm() / fd.norm(), 1e-7);
  EXPECT_LT((pi.apply_pi2(w) - 2.0 * pi.apply_prime(w) - pi.apply(w) / z).norm(), 1e-12 * w.norm());
}

TEST(Resolvent, MatchesExplicitInverse) {
  Fixture f;
  const auto smp = ensemble::sample_data(f.sigma, Matrix(), f.m, f.n, ensemble::NoiseLaw::gaussian(), 4);
  const double z = f.edge.lambda_plus + 0.7;
  const locallaw::ResolventBundle g(std::make_shared<const locallaw::SampleSpectrum>(smp.y), z);
  const Matrix ref = explicit_h_minus_z(smp.y, z).inverse();
  EXPECT_LT(max_abs(g.dense() - ref), 1e-10);
  Stream s(2, 0);
  Vector w(f.m + f.n);
  for (Index i = 0; i < w.size(); ++i) w[i] = s.normal();
  EXPECT_LT((g.apply(w) - ref * w).norm(), 1e-10 * w.norm());
  EXPECT_LT((g.apply_h_minus_z(g.apply(w)) - w).norm(), 1e-10 * w.norm());
  EXPECT_NEAR(g.trace_g_n(), ref.bottomRightCorner(f.n, f.n).trace() / static_cast<double>(f.n), 1e-12);
  const Eigen::JacobiSVD<Matrix> svd(ref);
  EXPECT_NEAR(g.norm(), svd.singularValues()[0], 1e-8 * g.norm());
}

TEST(Resolvent, GuardsAndMargins) {
  Fixture f;
  const auto smp = ensemble::sample_data(f.sigma, Matrix(), f.m, f.n, ensemble::NoiseLaw::gaussian(), 5);
  auto spec = std::make_shared<const locallaw::SampleSpectrum>(smp.y);
  const double top = spec->values().maxCoeff();
  EXPECT_THROW(locallaw::ResolventBundle(spec, top * (1.0 + 1e-9)), ConditioningError);
  EXPECT_NO_THROW(locallaw::ResolventBundle(spec, top * (1.0 + 1e-9), false));
  EXPECT_THROW(locallaw::build_resolvent(smp.x, f.sigma, f.edge.lambda_plus + 0.01, f.edge), DomainError);
}

TEST(Resolvent, IsotropicLawHoldsAtModerateSize) {
  const Index m = 200, n = 400;
  const auto sigma = spectra::make_covariance(CovarianceRecipe::toeplitz(0.1), m);
  const auto nu = spectra::esd(sigma);
  const auto edge = stieltjes::find_w_plus(nu, 0.5);
  const double z = edge.lambda_plus + 1.0;
  const auto smp = ensemble::sample_data(sigma, Matrix(), m, n, ensemble::NoiseLaw::gaussian(), 6);
  const locallaw::ResolventBundle g(std::make_shared<const locallaw::SampleSpectrum>(smp.y), z);
  const locallaw::DeterministicEquivalent pi(sigma, n, z, nu, edge);
  Stream s(7, 0);
  Vector p(m + n), q(m + n);
  for (Index i = 0; i < p.size(); ++i) {
    p[i] = s.normal();
    q[i] = s.normal();
  }
  p.normalize();
  q.normalize();
  EXPECT_LT(locallaw::isotropic_residual(g, pi, p, q), 0.05);
  EXPECT_LT(locallaw::g2_residual(g, pi, p, q), 0.05);
  EXPECT_LT(std::abs(g.trace_g_n() - pi.m()), 0.01);
}

TEST(MasterMatrix, DeterministicIdentities) {
  const Index m = 100, n = 200;
  const auto sigma = spectra::make_covariance(CovarianceRecipe::toeplitz(0.2), m);
  Matrix dense = Matrix::Zero(m, n);
  dense(0, 0) = std::sqrt(6.0);
  dense(1, 1) = std::sqrt(3.0);
  const auto s = spikes::SignalModel::from_dense(dense);
  const auto pop = spikes::deform(sigma, s, 0.1);
  ASSERT_EQ(pop.k0, 2);
  const auto th = spikes::asymptotic_quantities(sigma, s, pop, ensemble::NoiseLaw::gaussian());
  for (const auto& r : locallaw::master_matrix_deterministic(sigma, s, th)) {
    EXPECT_LT(r.null_residual, 1e-10);
    EXPECT_NEAR(r.b_form / r.b_form_expected, 1.0, 1e-10);
    EXPECT_LT(r.m_theta_error, 1e-12);
    EXPECT_GT(r.det_contrast, 1e3);
  }
}

TEST(MasterMatrix, SampleSpikeIsRootOfAG) {
  const Index m = 100, n = 200;
  const auto sigma = spectra::make_covariance(CovarianceRecipe::identity(), m);
  const auto s = spikes::SignalModel::localized(m, n, std::sqrt(5.25));
  const auto smp = ensemble::sample_data(sigma, s.dense(), m, n, ensemble::NoiseLaw::gaussian(), 8);
  const double lambda = ensemble::top_eigs(smp.y, 1)[0];
  // A_G is built from the noise part Y alone.
  auto spec = std::make_shared<const locallaw::SampleSpectrum>(smp.x);
  EXPECT_LT(locallaw::a_g_min_abs_eigenvalue(spec, s, lambda), 1e-8);
  EXPECT_GT(locallaw::a_g_min_abs_eigenvalue(spec, s, lambda + 0.3), 1e-3);
}

TEST(Verification, SmallRunProducesChecks) {
  locallaw::VerificationOptions opt;
  opt.n = 60;
  opt.seeds = 3;
  opt.probes = 2;
  const auto rep = locallaw::run_verification(opt);
  EXPECT_EQ(rep.n_large, 240);
  EXPECT_GT(rep.checks.size(), 10u);
  for (const auto& c : rep.checks) {
    if (c.name.find("shrink factor") == std::string::npos) EXPECT_TRUE(c.pass) << c.name << " = " << c.value;
  }
}
