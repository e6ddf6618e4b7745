#include <gtest/gtest.h>

#include <cmath>

#include "spikefluct/assumptions.hpp"
#include "spikefluct/spectra.hpp"

using namespace spikefluct;
using spectra::CovarianceRecipe;

TEST(Covariance, IdentityIsLazy) {
  const auto s = spectra::make_covariance(CovarianceRecipe::identity(), 5);
  EXPECT_TRUE(s.is_identity());
  EXPECT_EQ(s.dim(), 5);
  EXPECT_EQ(s.eigenvalues(), Vector::Ones(5));
  EXPECT_EQ(s.eigenvectors(), Matrix::Identity(5, 5));
  const Matrix a = Matrix::Random(5, 3);
  EXPECT_EQ(s.apply_sqrt(a), a);
}

TEST(Covariance, DiagonalSortsEigenvaluesKeepsAction) {
  const auto s = spectra::make_covariance(CovarianceRecipe::diag({1.0, 4.0, 9.0}), 3);
  EXPECT_DOUBLE_EQ(s.eigenvalues()[0], 9.0);
  EXPECT_DOUBLE_EQ(s.eigenvalues()[2], 1.0);
  Vector x(3);
  x << 1, 1, 1;
  const Matrix y = s.apply_sqrt(x);
  EXPECT_DOUBLE_EQ(y(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(y(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(y(2, 0), 3.0);
}

TEST(Covariance, DiagonalRejectsNegativeEntry) {
  EXPECT_THROW(spectra::make_covariance(CovarianceRecipe::diag({1.0, -0.5}), 2), NonPsdError);
  EXPECT_THROW(spectra::make_covariance(CovarianceRecipe::diag({1.0, 2.0}), 3), InvalidArgument);
}

TEST(Covariance, ToeplitzReconstructsAndHasUnitTrace) {
  const Index m = 40;
  const auto s = spectra::make_covariance(CovarianceRecipe::toeplitz(0.1), m);
  EXPECT_LT(s.reconstruction_error(), 1e-12);
  EXPECT_LT(s.sqrt_error(), 1e-12);
  EXPECT_NEAR(s.eigenvalues().sum(), static_cast<double>(m), 1e-10);
  const Matrix a = s.matrix();
  EXPECT_NEAR(a(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(a(0, 3), 1e-3, 1e-15);
  // Spectrum of the AR(1) correlation lies in [(1-r)/(1+r), (1+r)/(1-r)].
  EXPECT_LE(s.eigenvalues()[0], 1.1 / 0.9);
  EXPECT_GE(s.eigenvalues()[m - 1], 0.9 / 1.1);
}

TEST(Covariance, ToeplitzRejectsUnitRatio) {
  EXPECT_THROW(spectra::make_covariance(CovarianceRecipe::toeplitz(1.0), 4), InvalidArgument);
}

TEST(Covariance, DenseRejectsIndefinite) {
  Matrix a(2, 2);
  a << 1, 2, 2, 1;
  EXPECT_THROW(spectra::make_covariance(CovarianceRecipe::from_matrix(a), 2), NonPsdError);
  Matrix b(2, 2);
  b << 1, 0.5, 0.4, 1;
  EXPECT_THROW(spectra::make_covariance(CovarianceRecipe::from_matrix(b), 2), InvalidArgument);
}

TEST(Covariance, HaarRotatedIsDeterministicAndBounded) {
  const auto a = spectra::make_covariance(CovarianceRecipe::haar_rotated(1.0, 1.5), 30, 99);
  const auto b = spectra::make_covariance(CovarianceRecipe::haar_rotated(1.0, 1.5), 30, 99);
  const auto c = spectra::make_covariance(CovarianceRecipe::haar_rotated(1.0, 1.5), 30, 100);
  EXPECT_EQ(a.matrix(), b.matrix());
  EXPECT_GT(max_abs(a.matrix() - c.matrix()), 1e-3);
  EXPECT_GE(a.eigenvalues().minCoeff(), 1.0);
  EXPECT_LE(a.eigenvalues().maxCoeff(), 1.5);
  EXPECT_LT(orthonormality_defect(a.eigenvectors()), 1e-12);
  EXPECT_LT(a.sqrt_error(), 1e-12);
}

TEST(Haar, SquaredEntriesAverageOneOverM) {
  const Index m = 20;
  double acc = 0.0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    Stream st(5, static_cast<std::uint64_t>(r));
    const Matrix o = spectra::haar_orthogonal(m, st);
    ASSERT_LT(orthonormality_defect(o), 1e-12);
    acc += o(0, 0) * o(0, 0);
  }
  // E O_11^2 = 1/m, Var = 2(m-1)/(m^2(m+2)).
  const double sd = std::sqrt(2.0 * (m - 1) / (m * m * (m + 2.0)) / reps);
  EXPECT_NEAR(acc / reps, 1.0 / m, 4.0 * sd);
}

TEST(Esd, MergesRepeatedEigenvalues) {
  const auto nu = spectra::esd(spectra::make_covariance(CovarianceRecipe::diag({2.0, 1.0, 2.0, 1.0}), 4));
  ASSERT_EQ(nu.atoms().size(), 2u);
  EXPECT_DOUBLE_EQ(nu.total_weight(), 1.0);
  EXPECT_DOUBLE_EQ(nu.max_value(), 2.0);
  EXPECT_DOUBLE_EQ(nu.mass_at_or_below(1.5), 0.5);
  EXPECT_DOUBLE_EQ(nu.integrate([](double s) { return s; }), 1.5);
}

TEST(Esd, FromAtomsValidates) {
  using Atom = spectra::SpectralDistribution::Atom;
  EXPECT_THROW(spectra::SpectralDistribution::from_atoms({Atom{1.0, 0.5}}), InvalidArgument);
  EXPECT_THROW(spectra::SpectralDistribution::from_atoms({Atom{-1.0, 1.0}}), InvalidArgument);
  EXPECT_NO_THROW(spectra::SpectralDistribution::from_atoms({Atom{1.0, 0.25}, Atom{3.0, 0.75}}));
}

TEST(Assumptions, IdentityPassesAndExtremeAspectFails) {
  const auto ok = spectra::check_assumptions(spectra::make_covariance(CovarianceRecipe::identity(), 50), 100, 0.1);
  EXPECT_TRUE(ok.all_pass());
  const auto bad =
      spectra::check_assumptions(spectra::make_covariance(CovarianceRecipe::identity(), 2), 100, 0.1);
  EXPECT_FALSE(bad.all_pass());
}
