#pragma once

// Seeded Monte-Carlo ensembles for the spiked models
//
//   additive        Q~_a = Y~ Y~^T,  Y~ = S + Sigma^{1/2} X
//   multiplicative  Q~_m = Sigma~^{1/2} X X^T Sigma~^{1/2}
//
// Replication r draws from the stream (master_seed, stream_id({tag, r})), so
// its output does not depend on which worker runs it.

#include <cmath>
#include <complex>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "spikefluct/error.hpp"
#include "spikefluct/format.hpp"
#include "spikefluct/linalg.hpp"
#include "spikefluct/noise.hpp"
#include "spikefluct/parallel.hpp"
#include "spikefluct/rng.hpp"
#include "spikefluct/spectra.hpp"
#include "spikefluct/spikes.hpp"

namespace spikefluct::ensemble {

using spectra::CovarianceModel;
using spikes::SignalModel;

inline constexpr std::uint64_t kSpikeStreamTag = 0x5B1CE;

/// One draw of the additive model.
struct Sample {
  Matrix x;  // entries law / sqrt(N)
  Matrix y;  // S + Sigma^{1/2} X
};

/// Draws X (column-major, entry by entry from `stream`) and forms
/// Y~ = S + Sigma^{1/2} X. An empty `signal` means S = 0.
inline Sample sample_data(const CovarianceModel& sigma, const Matrix& signal, Index m, Index n,
                          const NoiseLaw& law, Stream& stream) {
  if (sigma.dim() != m) throw InvalidArgument("covariance dimension does not match M");
  if (signal.size() != 0 && (signal.rows() != m || signal.cols() != n)) {
    throw InvalidArgument("signal must be M x N");
  }
  Sample s;
  s.x.resize(m, n);
  law.fill(stream, s.x, 1.0 / std::sqrt(static_cast<double>(n)));
  s.y = sigma.apply_sqrt(s.x);
  if (signal.size() != 0) s.y += signal;
  return s;
}

inline Sample sample_data(const CovarianceModel& sigma, const Matrix& signal, Index m, Index n,
                          const NoiseLaw& law, std::uint64_t seed) {
  Stream stream(seed, 0);
  return sample_data(sigma, signal, m, n, law, stream);
}

enum class EigenMethod { gram, svd };

/// The r largest eigenvalues of Y Y^T, non-increasing.
///
/// `gram` forms the smaller of Y Y^T and Y^T Y and runs a values-only
/// symmetric solver; `svd` squares the singular values of Y.
inline Vector top_eigs(const Matrix& y, Index r, EigenMethod method = EigenMethod::gram) {
  const Index k = std::min(y.rows(), y.cols());
  if (r < 1 || r > k) {
    throw InvalidArgument("requested " + std::to_string(r) + " eigenvalues of a matrix with " +
                          std::to_string(k) + " nonzero ones");
  }
  if (method == EigenMethod::svd) {
    Eigen::BDCSVD<Matrix> svd(y);
    return svd.singularValues().head(r).cwiseAbs2();
  }
  Matrix gram = Matrix::Zero(k, k);
  if (y.rows() <= y.cols()) {
    gram.selfadjointView<Eigen::Lower>().rankUpdate(y);
  } else {
    gram.selfadjointView<Eigen::Lower>().rankUpdate(y.transpose());
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("Gram eigenvalue solver did not converge");
  return solver.eigenvalues().tail(r).reverse();
}

enum class SpikeModel { additive, multiplicative };

inline const char* to_string(SpikeModel m) {
  return m == SpikeModel::additive ? "additive" : "multiplicative";
}

struct SpikeMcOptions {
  Index reps = 2000;
  std::uint64_t master_seed = 0;
  SpikeModel model = SpikeModel::additive;
  bool couple_theta = false;
  Index eigenvalues = 0;  // 0: K0 + 1
  double tau = 0.1;
  unsigned threads = 0;
  EigenMethod method = EigenMethod::gram;
};

struct SpikeRecord {
  Index rep = 0;
  std::uint64_t stream = 0;
  Vector lambda;       // top eigenvalues
  Vector fluctuation;  // sqrt(N)(lambda_k - theta_k), k < K0
  Vector theta_part;   // Theta_k from the same X, when coupled
};

struct SpikeSamples {
  SpikeModel model = SpikeModel::additive;
  std::string law;
  std::uint64_t master_seed = 0;
  Index m = 0, n = 0, k0 = 0;
  bool coupled = false;
  Vector theta;  // theta_k, k < K0
  std::vector<SpikeRecord> records;

  std::vector<double> fluctuations(Index k) const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.fluctuation[k]);
    return out;
  }
  std::vector<double> lambdas(Index k) const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.lambda[k]);
    return out;
  }
  std::vector<double> theta_parts(Index k) const {
    if (!coupled) throw InvalidArgument("samples carry no coupled Theta values");
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.theta_part[k]);
    return out;
  }

  /// One row per replication: rep, stream, lambda_1..r, fluctuations, Theta.
  void write_csv(std::ostream& os, int digits = 10) const {
    if (records.empty()) return;
    const Index r = records.front().lambda.size();
    os << "rep,stream";
    for (Index k = 0; k < r; ++k) os << ",lambda_" << k + 1;
    for (Index k = 0; k < k0; ++k) os << ",fluct_" << k + 1;
    if (coupled) {
      for (Index k = 0; k < k0; ++k) os << ",Theta_" << k + 1;
    }
    os << '\n';
    for (const auto& rec : records) {
      os << rec.rep << ',' << rec.stream;
      for (Index k = 0; k < rec.lambda.size(); ++k) os << ',' << format_double(rec.lambda[k], digits);
      for (Index k = 0; k < rec.fluctuation.size(); ++k) {
        os << ',' << format_double(rec.fluctuation[k], digits);
      }
      for (Index k = 0; k < rec.theta_part.size(); ++k) {
        os << ',' << format_double(rec.theta_part[k], digits);
      }
      os << '\n';
    }
  }
};

/// Sigma~^{1/2} for the multiplicative model.
inline Matrix deformed_sqrt(const CovarianceModel& sigma, const SignalModel& s) {
  const SymmetricEigen eig = symmetric_eigen_desc(spikes::deformed_matrix(sigma, s));
  return eig.vectors * eig.values.cwiseMax(0.0).cwiseSqrt().asDiagonal() * eig.vectors.transpose();
}

/// Monte-Carlo spike eigenvalues. Each replication is stored in its own
/// slot, so the result is identical for every thread count.
inline SpikeSamples run_spike_mc(const CovarianceModel& sigma, const SignalModel& s, const NoiseLaw& law,
                                 const SpikeMcOptions& opt) {
  if (opt.reps < 0) throw InvalidArgument("replication count must be non-negative");
  const Index m = sigma.dim();
  const Index n = s.cols();
  const spikes::DeformedPopulation pop = spikes::deform(sigma, s, opt.tau);
  std::optional<spikes::SpikeTheory> theory;
  if (pop.k0 > 0) theory = spikes::asymptotic_quantities(sigma, s, pop, law);
  const Index k0 = pop.k0;
  const Index r = opt.eigenvalues > 0 ? opt.eigenvalues : std::min(k0 + 1, std::min(m, n));

  SpikeSamples out;
  out.model = opt.model;
  out.law = law.name();
  out.master_seed = opt.master_seed;
  out.m = m;
  out.n = n;
  out.k0 = k0;
  out.coupled = opt.couple_theta && k0 > 0;
  out.theta.resize(k0);
  for (Index k = 0; k < k0; ++k) out.theta[k] = theory->spikes[static_cast<std::size_t>(k)].theta;
  out.records.resize(static_cast<std::size_t>(opt.reps));

  const Matrix signal = s.dense();
  Matrix root;
  if (opt.model == SpikeModel::multiplicative) root = deformed_sqrt(sigma, s);
  const double rn = std::sqrt(static_cast<double>(n));

  parallel_for(static_cast<std::size_t>(opt.reps), opt.threads, [&](std::size_t i) {
    SpikeRecord& rec = out.records[i];
    rec.rep = static_cast<Index>(i);
    rec.stream = stream_id({kSpikeStreamTag, static_cast<std::uint64_t>(i)});
    Stream stream(opt.master_seed, rec.stream);
    Matrix x(m, n);
    law.fill(stream, x, 1.0 / rn);
    Matrix y;
    if (opt.model == SpikeModel::additive) {
      y = sigma.apply_sqrt(x);
      y += signal;
    } else {
      y.noalias() = root * x;
    }
    rec.lambda = top_eigs(y, r, opt.method);
    rec.fluctuation.resize(k0);
    for (Index k = 0; k < k0; ++k) rec.fluctuation[k] = rn * (rec.lambda[k] - out.theta[k]);
    if (out.coupled) {
      rec.theta_part.resize(k0);
      for (Index k = 0; k < k0; ++k) {
        const auto& sp = theory->spikes[static_cast<std::size_t>(k)];
        rec.theta_part[k] = 2.0 * rn * sp.theta_prime * sp.sqrt_sigma_psi.dot(x * sp.s_top_psi);
      }
    }
  });
  return out;
}

/// Signal of a K-cluster mixture: S = N^{-1/2} C L^T with L the N x K
/// membership indicator.
struct MixtureSignal {
  SignalModel signal;
  Matrix dense;
  std::vector<Index> labels;
  std::vector<Index> counts;  // N_k
  std::vector<std::string> warnings;
};

/// Contiguous balanced labels: cluster k gets floor(N/K) members, plus one
/// for the first N mod K clusters.
inline std::vector<Index> balanced_labels(Index n, Index k) {
  if (k < 1 || n < 1) throw InvalidArgument("balanced labels need N, K >= 1");
  std::vector<Index> labels;
  labels.reserve(static_cast<std::size_t>(n));
  for (Index c = 0; c < k; ++c) {
    const Index size = n / k + (c < n % k ? 1 : 0);
    for (Index j = 0; j < size; ++j) labels.push_back(c);
  }
  return labels;
}

/// Labels drawn i.i.d. from the probabilities `alpha`.
inline std::vector<Index> random_labels(Index n, std::span<const double> alpha, std::uint64_t seed) {
  if (alpha.empty()) throw InvalidArgument("mixture needs at least one cluster");
  long double total = 0.0L;
  for (const double a : alpha) {
    if (!(a >= 0.0)) throw InvalidArgument("mixture probabilities must be non-negative");
    total += a;
  }
  if (std::abs(static_cast<double>(total) - 1.0) > 1e-12) {
    throw InvalidArgument("mixture probabilities must sum to 1");
  }
  Stream stream(seed, stream_id({0x1AB, 0}));
  std::vector<Index> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) {
    const double u = stream.uniform();
    long double acc = 0.0L;
    l = static_cast<Index>(alpha.size()) - 1;
    for (std::size_t c = 0; c < alpha.size(); ++c) {
      acc += alpha[c];
      if (u < acc) {
        l = static_cast<Index>(c);
        break;
      }
    }
  }
  return labels;
}

inline MixtureSignal mixture_signal(const Matrix& centers, std::vector<Index> labels) {
  const Index k = centers.cols();
  const Index n = static_cast<Index>(labels.size());
  if (k < 1 || n < 1) throw InvalidArgument("mixture needs centers and labels");
  MixtureSignal out;
  out.counts.assign(static_cast<std::size_t>(k), 0);
  for (const Index l : labels) {
    if (l < 0 || l >= k) throw InvalidArgument("cluster label out of range");
    out.counts[static_cast<std::size_t>(l)]++;
  }
  for (Index c = 0; c < k; ++c) {
    if (out.counts[static_cast<std::size_t>(c)] == 0) {
      out.warnings.push_back("cluster " + std::to_string(c + 1) + " is empty");
    }
  }
  out.dense.resize(centers.rows(), n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (Index j = 0; j < n; ++j) out.dense.col(j) = scale * centers.col(labels[static_cast<std::size_t>(j)]);
  out.signal = SignalModel::from_dense(out.dense);
  out.labels = std::move(labels);
  return out;
}

struct CfCheck {
  Complex lhs;
  Complex rhs;
  double distance;
};

/// Compares the sample average of exp(i(Phi + Theta)), with
/// Phi = sum s_k Phi_k and Theta = sum t_k Theta_k, against
/// exp(-(V + 2W)/2) E exp(i Theta) computed exactly from the law.
inline CfCheck empirical_cf_check(const SpikeSamples& samples, const spikes::SpikeTheory& theory,
                                  const NoiseLaw& law, std::span<const double> s, std::span<const double> t) {
  if (!samples.coupled) throw InvalidArgument("empirical cf check needs coupled Theta samples");
  const Index k0 = theory.k0();
  if (static_cast<Index>(s.size()) != k0 || static_cast<Index>(t.size()) != k0 || samples.k0 != k0) {
    throw InvalidArgument("coefficient vectors must have one entry per supercritical spike");
  }
  const Vector shifts = theory.shifts();
  stats::CompensatedSum re, im;
  for (const auto& rec : samples.records) {
    double arg = 0.0;
    for (Index k = 0; k < k0; ++k) {
      const double phi = rec.fluctuation[k] - rec.theta_part[k] - shifts[k];
      arg += s[static_cast<std::size_t>(k)] * phi + t[static_cast<std::size_t>(k)] * rec.theta_part[k];
    }
    re.add(std::cos(arg));
    im.add(std::sin(arg));
  }
  const double count = static_cast<double>(samples.records.size());
  const Complex lhs = samples.records.empty()
                          ? Complex{1.0, 0.0}
                          : Complex{static_cast<double>(re.value()) / count, static_cast<double>(im.value()) / count};
  double v = 0.0, w = 0.0;
  for (Index k = 0; k < k0; ++k) {
    for (Index j = 0; j < k0; ++j) {
      v += s[static_cast<std::size_t>(k)] * s[static_cast<std::size_t>(j)] * theory.v(k, j);
      w += s[static_cast<std::size_t>(k)] * t[static_cast<std::size_t>(j)] * theory.w(k, j);
    }
  }
  const Complex rhs = std::exp(-(v + 2.0 * w) / 2.0) * spikes::theta_component_cf(t, theory, law);
  return {lhs, rhs, std::abs(lhs - rhs)};
}

}  // namespace spikefluct::ensemble
