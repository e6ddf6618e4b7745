#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "spikefluct/spikes.hpp"

using namespace spikefluct;
using spectra::CovarianceRecipe;
using spikes::SignalModel;

namespace {

Matrix random_orthonormal(Index rows, Index cols, std::uint64_t seed) {
  Stream s(seed, 0);
  Matrix g(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) g(i, j) = s.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

spectra::CovarianceModel identity(Index m) { return spectra::make_covariance(CovarianceRecipe::identity(), m); }

}  // namespace

TEST(SignalModel, FactorsAreSortedAndValidated) {
  const Matrix u = random_orthonormal(10, 2, 1);
  const Matrix v = random_orthonormal(20, 2, 2);
  Vector d(2);
  d << 1.0, 3.0;
  const auto s = SignalModel::from_factors(u, d, v);
  EXPECT_DOUBLE_EQ(s.singular_values()[0], 3.0);
  EXPECT_LT(max_abs(s.left().col(0) - u.col(1)), 1e-15);
  Vector bad(2);
  bad << 1.0, -1.0;
  EXPECT_THROW(SignalModel::from_factors(u, bad, v), InvalidArgument);
  Matrix skew = u;
  skew(0, 0) += 0.1;
  EXPECT_THROW(SignalModel::from_factors(skew, d, v), InvalidArgument);
}

TEST(SignalModel, DenseRoundTrip) {
  const Matrix u = random_orthonormal(12, 3, 3);
  const Matrix v = random_orthonormal(15, 3, 4);
  Vector d(3);
  d << 4.0, 2.0, 1.0;
  const Matrix dense = u * d.asDiagonal() * v.transpose();
  const auto s = SignalModel::from_dense(dense);
  EXPECT_EQ(s.rank(), 3);
  EXPECT_LT(max_abs(s.dense() - dense), 1e-12);
  EXPECT_LT(s.reconstruction_error(), 1e-12);
  const Vector x = Vector::Ones(12);
  EXPECT_LT(max_abs(s.transpose_times(x) - dense.transpose() * x), 1e-12);
}

TEST(SignalModel, Localized) {
  const auto s = SignalModel::localized(5, 8, 2.0);
  EXPECT_EQ(s.rank(), 1);
  EXPECT_DOUBLE_EQ(s.dense()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(s.dense().cwiseAbs().sum(), 2.0);
}

TEST(Deform, RankOneIdentity) {
  const Index m = 200, n = 400;
  const auto pop = spikes::deform(identity(m), SignalModel::localized(m, n, std::sqrt(5.25)), 0.1);
  EXPECT_NEAR(pop.sigma_tilde[0], 6.25, 1e-12);
  EXPECT_NEAR(pop.threshold, 1.0 + std::sqrt(0.5), 1e-10);
  EXPECT_EQ(pop.k0, 1);
  EXPECT_NEAR(std::abs(pop.psi(0, 0)), 1.0, 1e-12);
  EXPECT_LT(pop.eigen_residual(spikes::deformed_matrix(identity(m), SignalModel::localized(m, n, std::sqrt(5.25)))),
            1e-12);
}

TEST(Deform, SpikeAtThresholdIsExcluded) {
  const Index m = 50, n = 100;
  // d^4 = phi puts sigma~ = 1 + d^2 exactly at the threshold 1 + sqrt(phi).
  const double d = std::pow(0.5, 0.25);
  for (const double tau : {1e-6, 0.1}) {
    const auto pop = spikes::deform(identity(m), SignalModel::localized(m, n, d), tau);
    EXPECT_EQ(pop.k0, 0);
    EXPECT_FALSE(pop.warnings.empty());
  }
}

TEST(Deform, Errors) {
  EXPECT_THROW(spikes::deform(identity(10), SignalModel::localized(11, 20, 2.0), 0.1), InvalidArgument);
  EXPECT_THROW(spikes::deform(identity(10), SignalModel::localized(10, 20, 2.0), 0.0), InvalidArgument);
}

TEST(MixedMoment, HandValues) {
  Vector a(2), b(2);
  a << 1, 1;
  b << 1, 1;
  EXPECT_DOUBLE_EQ(spikes::mixed_moment(a, 1, b, 1), 2.0);
  Vector c(3), e(3);
  c << 1, 2, 3;
  e << 2, 1, -1;
  EXPECT_DOUBLE_EQ(spikes::mixed_moment(c, 2, e, 1), 2.0 + 4.0 - 9.0);
  EXPECT_DOUBLE_EQ(spikes::mixed_moment(c, 2, e, 2), 4.0 + 4.0 + 9.0);
}

TEST(Theory, LocalizedIdentityValues) {
  const Index m = 200, n = 400;
  const auto sig = identity(m);
  const auto s = SignalModel::localized(m, n, std::sqrt(5.25));
  const auto pop = spikes::deform(sig, s, 0.1);
  const auto th = spikes::asymptotic_quantities(sig, s, pop, ensemble::NoiseLaw::gaussian());
  const double d2 = 5.25, phi = 0.5, tp = 1.0 - phi / (d2 * d2);
  EXPECT_NEAR(th.spikes[0].theta, 6.8452380952380949, 1e-10);
  EXPECT_NEAR(th.spikes[0].theta_prime, tp, 1e-12);
  EXPECT_NEAR(th.v(0, 0), 2.0 * tp * (1.0 + phi + 2.0 * phi / d2), 1e-10);
  EXPECT_NEAR(th.theta_covariance()(0, 0), 4.0 * tp * tp * d2, 1e-10);
  const auto prof = spikes::delocalization_profile(th);
  EXPECT_NEAR(prof[0].sqrt_sigma_psi_sup, 1.0, 1e-12);
  EXPECT_NEAR(prof[0].s_top_psi_sup, std::sqrt(d2), 1e-12);
}

class Reduction : public ::testing::TestWithParam<const char*> {};

TEST_P(Reduction, GeneralPathMatchesIdentityFormulas) {
  const Index m = 60, n = 120;
  const Matrix u = random_orthonormal(m, 3, 11);
  const Matrix v = random_orthonormal(n, 3, 12);
  Vector d(3);
  d << std::sqrt(10.0), std::sqrt(5.25), std::sqrt(2.0);
  const auto s = SignalModel::from_factors(u, d, v);
  const auto sig = identity(m);
  const auto pop = spikes::deform(sig, s, 0.1);
  ASSERT_EQ(pop.k0, 3);
  const auto rep = spikes::sigma_identity_reduction_check(sig, s, pop, ensemble::make_noise_law(GetParam()));
  EXPECT_FALSE(rep.entries.empty());
  EXPECT_LE(rep.max_discrepancy, 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Laws, Reduction, ::testing::Values("gaussian", "uniform", "shifted-exponential"));

TEST(Reduction, EmptyWhenSubcritical) {
  const auto sig = identity(50);
  const auto s = SignalModel::localized(50, 100, 0.5);
  const auto pop = spikes::deform(sig, s, 0.1);
  EXPECT_TRUE(spikes::sigma_identity_reduction_check(sig, s, pop, ensemble::NoiseLaw::gaussian()).entries.empty());
}

TEST(Theory, CumulantZerosAreExact) {
  const Index m = 40, n = 80;
  const Matrix u = random_orthonormal(m, 2, 21);
  const Matrix v = random_orthonormal(n, 2, 22);
  Vector d(2);
  d << 3.0, 2.0;
  const auto s = SignalModel::from_factors(u, d, v);
  const auto sig = spectra::make_covariance(CovarianceRecipe::toeplitz(0.2), m);
  const auto pop = spikes::deform(sig, s, 0.1);
  const auto gauss = spikes::asymptotic_quantities(sig, s, pop, ensemble::NoiseLaw::gaussian());
  const auto unif = spikes::asymptotic_quantities(sig, s, pop, ensemble::NoiseLaw::uniform_sym());
  for (Index k = 0; k < gauss.k0(); ++k) {
    EXPECT_EQ(gauss.spikes[static_cast<std::size_t>(k)].shift, 0.0);
    EXPECT_EQ(unif.spikes[static_cast<std::size_t>(k)].shift, 0.0);
  }
  EXPECT_TRUE((gauss.w.array() == 0.0).all());
  EXPECT_TRUE((gauss.v120.array() == 0.0).all());
  EXPECT_TRUE((unif.w.array() == 0.0).all());
  EXPECT_FALSE((unif.v120.array() == 0.0).all());
  const auto expo = spikes::asymptotic_quantities(sig, s, pop, ensemble::NoiseLaw::shifted_exponential());
  EXPECT_FALSE((expo.w.array() == 0.0).all());
}

TEST(ThetaCf, LocalizedThreePointSingleFactor) {
  const Index m = 30, n = 60;
  const double d = std::sqrt(5.25);
  const auto sig = identity(m);
  const auto s = SignalModel::localized(m, n, d);
  const auto pop = spikes::deform(sig, s, 0.1);
  const auto law = ensemble::NoiseLaw::three_point();
  const auto th = spikes::asymptotic_quantities(sig, s, pop, law);
  const double t = 0.3;
  const double c = 2.0 * th.spikes[0].theta_prime * d * t;
  const Complex cf = spikes::theta_component_cf(std::vector<double>{t}, th, law);
  EXPECT_NEAR(cf.real(), 2.0 / 3.0 + std::cos(std::sqrt(3.0) * c) / 3.0, 1e-14);
  EXPECT_NEAR(cf.imag(), 0.0, 1e-14);
  EXPECT_EQ(spikes::theta_component_cf(std::vector<double>{0.0}, th, law), Complex(1.0, 0.0));
}

TEST(ThetaCf, GaussianMatchesQuadraticForm) {
  const Index m = 30, n = 60;
  const Matrix u = random_orthonormal(m, 2, 31);
  const Matrix v = random_orthonormal(n, 2, 32);
  Vector d(2);
  d << 3.0, 2.0;
  const auto s = SignalModel::from_factors(u, d, v);
  const auto sig = spectra::make_covariance(CovarianceRecipe::toeplitz(0.3), m);
  const auto pop = spikes::deform(sig, s, 0.1);
  const auto law = ensemble::NoiseLaw::gaussian();
  const auto th = spikes::asymptotic_quantities(sig, s, pop, law);
  ASSERT_EQ(th.k0(), 2);
  Vector t(2);
  t << 0.2, -0.15;
  const double q = t.dot(th.theta_covariance() * t);
  const Complex cf = spikes::theta_component_cf(std::vector<double>{t[0], t[1]}, th, law);
  EXPECT_NEAR(cf.real(), std::exp(-0.5 * q), 1e-12);
  EXPECT_THROW(spikes::theta_component_cf(std::vector<double>{1.0}, th, law), InvalidArgument);
}
