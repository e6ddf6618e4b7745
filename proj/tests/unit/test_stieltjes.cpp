#include <gtest/gtest.h>

#include <cmath>

#include "spikefluct/spectra.hpp"
#include "spikefluct/stieltjes.hpp"

using namespace spikefluct;
using spectra::SpectralDistribution;
using Atom = SpectralDistribution::Atom;

namespace {

SpectralDistribution point_mass() { return SpectralDistribution::from_atoms({Atom{1.0, 1.0}}); }

// Root in (w_+, 0) of z m^2 + (z + 1 - phi) m + 1 = 0, the Sigma = I equation f(m) = z.
double mp_m(double z, double phi) {
  const double b = z + 1.0 - phi;
  return (-b + std::sqrt(b * b - 4.0 * z)) / (2.0 * z);
}

}  // namespace

class EdgeClosedForm : public ::testing::TestWithParam<double> {};

TEST_P(EdgeClosedForm, MatchesSquareRootFormula) {
  const double phi = GetParam();
  const auto e = stieltjes::find_w_plus(point_mass(), phi);
  EXPECT_NEAR(e.w_plus, -1.0 / (1.0 + std::sqrt(phi)), 1e-10);
  EXPECT_NEAR(e.lambda_plus, std::pow(1.0 + std::sqrt(phi), 2), 1e-10);
  EXPECT_NEAR(e.threshold(), 1.0 + std::sqrt(phi), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Aspect, EdgeClosedForm, ::testing::Values(0.1, 0.25, 0.5, 1.0, 2.0, 4.0));

TEST(Edge, FprimeVanishesAndFsecondPositiveForTwoAtoms) {
  const auto nu = SpectralDistribution::from_atoms({Atom{1.0, 0.5}, Atom{3.0, 0.5}});
  const double phi = 0.5;
  const auto e = stieltjes::find_w_plus(nu, phi);
  EXPECT_GT(e.w_plus, -1.0 / 3.0);
  EXPECT_LT(e.w_plus, 0.0);
  const auto fv = stieltjes::f_eval(e.w_plus, nu, phi);
  EXPECT_NEAR(fv.f1, 0.0, 1e-8);
  EXPECT_GT(fv.f2, 0.0);
  // Independent evaluation of f at w_+.
  const double w = e.w_plus;
  const double f = -1.0 / w + phi * (0.5 * 1.0 / (1.0 + w) + 0.5 * 3.0 / (1.0 + 3.0 * w));
  EXPECT_NEAR(e.lambda_plus, f, 1e-12);
}

TEST(Edge, FevalSingularAtZero) {
  EXPECT_THROW(stieltjes::f_eval(0.0, point_mass(), 0.5), DomainError);
}

TEST(SolveM, MatchesQuadraticRootForIdentity) {
  const double phi = 0.5;
  const auto nu = point_mass();
  const auto e = stieltjes::find_w_plus(nu, phi);
  for (const double z : {e.lambda_plus + 0.01, 4.0, 6.8452381, 20.0}) {
    EXPECT_NEAR(stieltjes::solve_m(z, nu, phi, e), mp_m(z, phi), 1e-12) << "z = " << z;
  }
  EXPECT_THROW(stieltjes::solve_m(e.lambda_plus - 0.1, nu, phi, e), DomainError);
}

TEST(SolveM, DerivativeMatchesFiniteDifference) {
  const double phi = 0.5;
  const auto nu = point_mass();
  const auto e = stieltjes::find_w_plus(nu, phi);
  const double z = 5.0, h = 1e-5;
  const double fd = (mp_m(z + h, phi) - mp_m(z - h, phi)) / (2.0 * h);
  EXPECT_NEAR(stieltjes::m_derivative(z, nu, phi, e), fd, 1e-8);
  const double dd = (mp_m(7.0, phi) - mp_m(5.0, phi)) / 2.0;
  EXPECT_NEAR(stieltjes::m_divided_difference(7.0, 5.0, nu, phi, e), dd, 1e-12);
}

TEST(Theta, IdentityClosedForm) {
  const double phi = 0.5;
  for (const double d2 : {2.0, 5.25, 10.0}) {
    const auto t = stieltjes::theta_map(1.0 + d2, point_mass(), phi);
    EXPECT_NEAR(t.theta, 1.0 + d2 + phi * (1.0 + 1.0 / d2), 1e-12);
    EXPECT_NEAR(t.theta_prime, 1.0 - phi / (d2 * d2), 1e-12);
  }
  EXPECT_NEAR(stieltjes::theta_map(6.25, point_mass(), 0.5).theta, 6.8452380952380949, 1e-12);
}

TEST(Theta, TwoAtomsByHand) {
  const auto nu = SpectralDistribution::from_atoms({Atom{1.0, 0.25}, Atom{2.0, 0.75}});
  const double phi = 0.3, s = 5.0;
  const auto t = stieltjes::theta_map(s, nu, phi);
  const double r1 = 1.0 / (s - 1.0), r2 = 2.0 / (s - 2.0);
  EXPECT_NEAR(t.theta, s + phi * s * (0.25 * r1 + 0.75 * r2), 1e-13);
  EXPECT_NEAR(t.theta_prime, 1.0 - phi * (0.25 * r1 * r1 + 0.75 * r2 * r2), 1e-13);
}

TEST(Theta, ThetaIsInverseOfMinusOneOverM) {
  const double phi = 0.5;
  const auto nu = SpectralDistribution::from_atoms({Atom{1.0, 0.5}, Atom{1.5, 0.5}});
  const auto e = stieltjes::find_w_plus(nu, phi);
  const double s = 4.0;
  const auto t = stieltjes::theta_map(s, nu, phi, e);
  EXPECT_NEAR(stieltjes::solve_m(t.theta, nu, phi, e), -1.0 / s, 1e-12);
}

TEST(Theta, SubcriticalThrowsWithThreshold) {
  try {
    stieltjes::theta_map(1.5, point_mass(), 0.5);
    FAIL() << "expected SubcriticalError";
  } catch (const SubcriticalError& e) {
    EXPECT_NEAR(e.threshold(), 1.0 + std::sqrt(0.5), 1e-10);
  }
}

TEST(TracyWidom, IdentityScale) {
  // For Sigma = I: f''(w_+)/2 = (1 + sqrt phi)^4 / sqrt phi, so the scale is (1+sqrt phi)^{4/3} phi^{-1/6}.
  const double phi = 0.5;
  const auto e = stieltjes::find_w_plus(point_mass(), phi);
  EXPECT_NEAR(stieltjes::tracy_widom_scale(e), std::pow(1.0 + std::sqrt(phi), 4.0 / 3.0) * std::pow(phi, -1.0 / 6.0),
              1e-8);
}
