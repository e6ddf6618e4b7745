#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "spikefluct/ensemble.hpp"
#include "spikefluct/stats.hpp"

using namespace spikefluct;
using spectra::CovarianceRecipe;
using spikes::SignalModel;

namespace {

spectra::CovarianceModel identity(Index m) { return spectra::make_covariance(CovarianceRecipe::identity(), m); }

}  // namespace

TEST(TopEigs, DiagonalCase) {
  Matrix y = Matrix::Zero(3, 4);
  y(0, 0) = 3.0;
  y(1, 1) = 2.0;
  for (const auto method : {ensemble::EigenMethod::gram, ensemble::EigenMethod::svd}) {
    const Vector ev = ensemble::top_eigs(y, 2, method);
    EXPECT_NEAR(ev[0], 9.0, 1e-12);
    EXPECT_NEAR(ev[1], 4.0, 1e-12);
  }
  EXPECT_THROW(ensemble::top_eigs(y, 4), InvalidArgument);
}

TEST(TopEigs, GramAgreesWithSvd) {
  const auto sample = ensemble::sample_data(identity(50), Matrix(), 50, 100, ensemble::NoiseLaw::gaussian(), 3);
  for (const Matrix& y : {Matrix(sample.y), Matrix(sample.y.transpose())}) {
    const Vector a = ensemble::top_eigs(y, 10, ensemble::EigenMethod::gram);
    const Vector b = ensemble::top_eigs(y, 10, ensemble::EigenMethod::svd);
    for (Index k = 0; k < 10; ++k) EXPECT_NEAR(a[k] / b[k], 1.0, 1e-9);
  }
}

TEST(SampleData, ScaleZeroSignalAndDeterminism) {
  const Index m = 60, n = 120;
  const auto law = ensemble::NoiseLaw::gaussian();
  const auto a = ensemble::sample_data(identity(m), Matrix(), m, n, law, 42);
  const auto b = ensemble::sample_data(identity(m), Matrix(), m, n, law, 42);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.y, a.x);
  const double rn = std::sqrt(static_cast<double>(n));
  for (Index j = 0; j < 5; ++j) {
    std::vector<double> col(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) col[static_cast<std::size_t>(i)] = rn * a.x(i, j);
    EXPECT_NEAR(stats::variance(col), 1.0, 5.0 / std::sqrt(static_cast<double>(m)));
  }
}

TEST(SampleData, AddsSignal) {
  const Index m = 10, n = 20;
  const auto s = SignalModel::localized(m, n, 2.0);
  const auto smp = ensemble::sample_data(identity(m), s.dense(), m, n, ensemble::NoiseLaw::gaussian(), 1);
  EXPECT_LT(max_abs(smp.y - smp.x - s.dense()), 1e-15);
}

TEST(Rigidity, NullLargestEigenvalueNearEdge) {
  const Index m = 100, n = 200;
  const double lp = std::pow(1.0 + std::sqrt(0.5), 2);
  const double band = 10.0 * std::pow(static_cast<double>(n), -2.0 / 3.0);
  int inside = 0;
  const int seeds = 500;
  for (int s = 0; s < seeds; ++s) {
    const auto smp = ensemble::sample_data(identity(m), Matrix(), m, n, ensemble::NoiseLaw::gaussian(),
                                           static_cast<std::uint64_t>(s));
    const double l1 = ensemble::top_eigs(smp.y, 1)[0];
    inside += std::abs(l1 - lp) <= band;
  }
  EXPECT_GE(inside, static_cast<int>(0.95 * seeds));
}

TEST(SpikeMc, ThreadCountDoesNotChangeCsv) {
  const Index m = 40, n = 80;
  const auto s = SignalModel::localized(m, n, 2.5);
  std::string first;
  for (const unsigned threads : {1u, 2u, 7u}) {
    ensemble::SpikeMcOptions o;
    o.reps = 60;
    o.master_seed = 5;
    o.couple_theta = true;
    o.threads = threads;
    const auto smp = ensemble::run_spike_mc(identity(m), s, ensemble::NoiseLaw::four_point(), o);
    std::ostringstream os;
    smp.write_csv(os, 17);
    if (first.empty()) {
      first = os.str();
    } else {
      EXPECT_EQ(os.str(), first);
    }
  }
}

TEST(SpikeMc, LocalizedThetaIsScaledEntry) {
  const Index m = 30, n = 60;
  const double d = 2.5;
  const auto s = SignalModel::localized(m, n, d);
  ensemble::SpikeMcOptions o;
  o.reps = 600;
  o.master_seed = 8;
  o.couple_theta = true;
  const auto law = ensemble::NoiseLaw::three_point();
  const auto smp = ensemble::run_spike_mc(identity(m), s, law, o);
  const auto pop = spikes::deform(identity(m), s, 0.1);
  const double tp = spikes::asymptotic_quantities(identity(m), s, pop, law).spikes[0].theta_prime;
  int zeros = 0;
  for (const double th : smp.theta_parts(0)) {
    const double x = th / (2.0 * tp * d);
    const bool atom = std::abs(x) < 1e-12 || std::abs(std::abs(x) - std::sqrt(3.0)) < 1e-12;
    EXPECT_TRUE(atom) << x;
    zeros += std::abs(x) < 1e-12;
  }
  EXPECT_NEAR(zeros / 600.0, 2.0 / 3.0, 3.0 / std::sqrt(600.0));
}

TEST(SpikeMc, NoCouplingMeansNoTheta) {
  const auto s = SignalModel::localized(20, 40, 2.5);
  ensemble::SpikeMcOptions o;
  o.reps = 3;
  const auto smp = ensemble::run_spike_mc(identity(20), s, ensemble::NoiseLaw::gaussian(), o);
  EXPECT_THROW(smp.theta_parts(0), InvalidArgument);
}

TEST(Mixture, TwoSymmetricClusters) {
  const Index m = 10, n = 40;
  Matrix c(m, 2);
  for (Index i = 0; i < m; ++i) c(i, 0) = 0.1 * static_cast<double>(i + 1);
  c.col(1) = -c.col(0);
  const auto mix = ensemble::mixture_signal(c, ensemble::balanced_labels(n, 2));
  EXPECT_EQ(mix.signal.rank(), 1);
  EXPECT_NEAR(mix.signal.singular_values()[0], c.col(0).norm(), 1e-12);
  EXPECT_NEAR(mix.signal.right().col(0).cwiseAbs().maxCoeff(), 1.0 / std::sqrt(static_cast<double>(n)), 1e-12);
  EXPECT_EQ(mix.counts, (std::vector<Index>{20, 20}));
}

TEST(Mixture, ThreeClusterCentersSumToZero) {
  const Index m = 50, n = 90;
  Stream st(4, 0);
  Matrix c(m, 3);
  for (Index i = 0; i < m; ++i) {
    c(i, 0) = st.uniform(0.0, 0.4);
    c(i, 1) = st.uniform(-0.3, 0.0);
  }
  c.col(2) = -(c.col(0) + c.col(1));
  const auto mix = ensemble::mixture_signal(c, ensemble::balanced_labels(n, 3));
  EXPECT_LT(mix.dense.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(mix.signal.rank(), 2);
}

TEST(Mixture, EmptyClusterWarnsAndZeroCentersRejected) {
  Matrix c = Matrix::Zero(5, 2);
  c(0, 0) = 1.0;
  const auto mix = ensemble::mixture_signal(c, std::vector<Index>(10, 0));
  EXPECT_FALSE(mix.warnings.empty());
  const auto zero = ensemble::mixture_signal(Matrix::Zero(5, 2), ensemble::balanced_labels(10, 2));
  EXPECT_EQ(zero.signal.rank(), 0);
  EXPECT_THROW(spikes::deform(identity(5), zero.signal, 0.1), InvalidArgument);
}

TEST(Mixture, RandomLabelsFollowAlpha) {
  const std::vector<double> alpha = {0.2, 0.8};
  const auto labels = ensemble::random_labels(5000, alpha, 3);
  double ones = 0.0;
  for (const Index l : labels) ones += static_cast<double>(l);
  EXPECT_NEAR(ones / 5000.0, 0.8, 0.03);
  EXPECT_THROW(ensemble::random_labels(10, std::vector<double>{0.5, 0.6}, 1), InvalidArgument);
}

TEST(CfCheck, ZeroArgumentsGiveOne) {
  const Index m = 20, n = 40;
  const auto s = SignalModel::localized(m, n, 2.5);
  ensemble::SpikeMcOptions o;
  o.reps = 10;
  o.couple_theta = true;
  const auto law = ensemble::NoiseLaw::gaussian();
  const auto smp = ensemble::run_spike_mc(identity(m), s, law, o);
  const auto th = spikes::asymptotic_quantities(identity(m), s, spikes::deform(identity(m), s, 0.1), law);
  const std::vector<double> zero = {0.0};
  const auto r = ensemble::empirical_cf_check(smp, th, law, zero, zero);
  EXPECT_EQ(r.lhs, Complex(1.0, 0.0));
  EXPECT_EQ(r.rhs, Complex(1.0, 0.0));
  EXPECT_EQ(r.distance, 0.0);
}
