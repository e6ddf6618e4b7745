#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spikefluct/error.hpp"
#include "spikefluct/linalg.hpp"
#include "spikefluct/rng.hpp"

namespace spikefluct::ensemble {

/// Exact rational number for moment bookkeeping of the built-in discrete laws.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational make(std::int64_t n, std::int64_t d) {
    if (d == 0) throw InvalidArgument("rational with zero denominator");
    if (d < 0) {
      n = -n;
      d = -d;
    }
    const std::int64_t g = std::gcd(n < 0 ? -n : n, d);
    return {n / (g == 0 ? 1 : g), d / (g == 0 ? 1 : g)};
  }
  friend Rational operator+(Rational a, Rational b) {
    return make(a.num * b.den + b.num * a.den, a.den * b.den);
  }
  friend Rational operator*(Rational a, Rational b) { return make(a.num * b.num, a.den * b.den); }
  friend bool operator==(Rational a, Rational b) { return a.num == b.num && a.den == b.den; }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

enum class NoiseKind { gaussian, uniform_sym, three_point, four_point, discrete, shifted_exponential, custom };

/// Law of the standardized entries sqrt(N) x_{i mu}: mean 0, variance 1,
/// homogeneous third and fourth cumulants.
class NoiseLaw {
 public:
  using Sampler = std::function<double(Stream&)>;

  static NoiseLaw gaussian() { return NoiseLaw(NoiseKind::gaussian, "gaussian", 0.0, 0.0); }

  /// Unif(-sqrt 3, sqrt 3): E x^4 = 9/5, so kappa_4 = -6/5.
  static NoiseLaw uniform_sym() { return NoiseLaw(NoiseKind::uniform_sym, "uniform", 0.0, -1.2); }

  /// P(+-sqrt 3) = 1/6, P(0) = 2/3; first four moments match N(0, 1).
  static NoiseLaw three_point() {
    NoiseLaw law(NoiseKind::three_point, "three-point", 0.0, 0.0);
    law.atoms_ = {-std::sqrt(3.0), 0.0, std::sqrt(3.0)};
    law.probs_ = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
    law.exact_ = ExactDiscrete{{Rational::make(3, 1), Rational::make(0, 1), Rational::make(3, 1)},
                               {Rational::make(1, 6), Rational::make(2, 3), Rational::make(1, 6)}};
    law.build_cumulative();
    return law;
  }

  /// P(+-1/sqrt 2) = 4/9, P(+-sqrt 5) = 1/18; first four moments match N(0, 1).
  static NoiseLaw four_point() {
    NoiseLaw law(NoiseKind::four_point, "four-point", 0.0, 0.0);
    const double a = 1.0 / std::sqrt(2.0);
    const double b = std::sqrt(5.0);
    law.atoms_ = {-b, -a, a, b};
    law.probs_ = {1.0 / 18.0, 4.0 / 9.0, 4.0 / 9.0, 1.0 / 18.0};
    law.exact_ = ExactDiscrete{
        {Rational::make(5, 1), Rational::make(1, 2), Rational::make(1, 2), Rational::make(5, 1)},
        {Rational::make(1, 18), Rational::make(4, 9), Rational::make(4, 9), Rational::make(1, 18)}};
    law.build_cumulative();
    return law;
  }

  /// Exp(1) - 1: kappa_3 = 2, kappa_4 = 6.
  static NoiseLaw shifted_exponential() {
    return NoiseLaw(NoiseKind::shifted_exponential, "shifted-exponential", 2.0, 6.0);
  }

  /// Arbitrary finite law, standardized to mean 0 and variance 1.
  static NoiseLaw discrete(std::vector<double> atoms, std::vector<double> probs) {
    if (atoms.size() != probs.size() || atoms.empty()) {
      throw InvalidArgument("discrete law needs matching, non-empty atoms and probabilities");
    }
    long double total = 0.0L;
    for (const double p : probs) {
      if (!(p >= 0.0)) throw InvalidArgument("discrete law has a negative probability");
      total += p;
    }
    if (std::abs(static_cast<double>(total) - 1.0) > 1e-12) {
      throw InvalidArgument("discrete law probabilities do not sum to 1");
    }
    long double mu = 0.0L;
    for (std::size_t i = 0; i < atoms.size(); ++i) mu += probs[i] * static_cast<long double>(atoms[i]);
    long double var = 0.0L;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const long double d = atoms[i] - mu;
      var += probs[i] * d * d;
    }
    if (!(var > 0.0L)) throw InvalidArgument("discrete law is degenerate (zero variance)");
    const long double sd = std::sqrt(var);
    long double m3 = 0.0L, m4 = 0.0L;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const long double x = (atoms[i] - mu) / sd;
      atoms[i] = static_cast<double>(x);
      m3 += probs[i] * x * x * x;
      m4 += probs[i] * x * x * x * x;
    }
    NoiseLaw law(NoiseKind::discrete, "discrete", static_cast<double>(m3), static_cast<double>(m4 - 3.0L));
    law.atoms_ = std::move(atoms);
    law.probs_ = std::move(probs);
    law.build_cumulative();
    return law;
  }

  /// Sampler-only law with user supplied cumulants; has no characteristic
  /// function.
  static NoiseLaw custom(std::string name, Sampler sampler, double kappa3, double kappa4) {
    NoiseLaw law(NoiseKind::custom, std::move(name), kappa3, kappa4);
    law.sampler_ = std::move(sampler);
    return law;
  }

  NoiseKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  double kappa3() const { return kappa3_; }
  double kappa4() const { return kappa4_; }
  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& probabilities() const { return probs_; }

  bool has_cf() const { return kind_ != NoiseKind::custom; }

  /// E exp(i t x).
  Complex cf(double t) const {
    switch (kind_) {
      case NoiseKind::gaussian: return {std::exp(-0.5 * t * t), 0.0};
      case NoiseKind::uniform_sym: {
        const double a = std::sqrt(3.0) * t;
        return {std::abs(a) < 1e-8 ? 1.0 - a * a / 6.0 : std::sin(a) / a, 0.0};
      }
      case NoiseKind::three_point:
      case NoiseKind::four_point:
      case NoiseKind::discrete: {
        Complex acc{0.0, 0.0};
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
          acc += probs_[i] * std::exp(Complex{0.0, t * atoms_[i]});
        }
        return acc;
      }
      case NoiseKind::shifted_exponential:
        return std::exp(Complex{0.0, -t}) / Complex{1.0, -t};
      case NoiseKind::custom: break;
    }
    throw CapabilityError("noise law '" + name_ + "' has no characteristic function");
  }

  double sample(Stream& s) const {
    switch (kind_) {
      case NoiseKind::gaussian: return s.normal();
      case NoiseKind::uniform_sym: return std::sqrt(3.0) * (2.0 * s.uniform() - 1.0);
      case NoiseKind::three_point:
      case NoiseKind::four_point:
      case NoiseKind::discrete: {
        const double u = s.uniform();
        for (std::size_t i = 0; i + 1 < cumulative_.size(); ++i) {
          if (u < cumulative_[i]) return atoms_[i];
        }
        return atoms_.back();
      }
      case NoiseKind::shifted_exponential: return -std::log(s.uniform_open()) - 1.0;
      case NoiseKind::custom: return sampler_(s);
    }
    return 0.0;
  }

  /// Fills `out` column by column with scale * (independent draws).
  void fill(Stream& s, Matrix& out, double scale) const {
    double* p = out.data();
    const Index n = out.size();
    for (Index k = 0; k < n; ++k) p[k] = scale * sample(s);
  }

  /// Exact (E x^2, E x^4) for the built-in discrete laws, from rational
  /// squared atoms and probabilities.
  std::optional<std::pair<Rational, Rational>> exact_even_moments() const {
    if (!exact_) return std::nullopt;
    Rational m2, m4;
    for (std::size_t i = 0; i < exact_->squares.size(); ++i) {
      m2 = m2 + exact_->probs[i] * exact_->squares[i];
      m4 = m4 + exact_->probs[i] * exact_->squares[i] * exact_->squares[i];
    }
    return std::make_pair(m2, m4);
  }

  /// Raw moments E x^p, p = 1..4, by exact summation (discrete laws) or
  /// closed form.
  std::vector<double> raw_moments() const {
    switch (kind_) {
      case NoiseKind::gaussian: return {0.0, 1.0, 0.0, 3.0};
      case NoiseKind::uniform_sym: return {0.0, 1.0, 0.0, 1.8};
      case NoiseKind::shifted_exponential: return {0.0, 1.0, 2.0, 9.0};
      case NoiseKind::custom: return {0.0, 1.0, kappa3_, kappa4_ + 3.0};
      default: {
        std::vector<long double> m(4, 0.0L);
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
          long double x = 1.0L;
          for (int p = 0; p < 4; ++p) {
            x *= atoms_[i];
            m[static_cast<std::size_t>(p)] += probs_[i] * x;
          }
        }
        return {static_cast<double>(m[0]), static_cast<double>(m[1]), static_cast<double>(m[2]),
                static_cast<double>(m[3])};
      }
    }
  }

 private:
  struct ExactDiscrete {
    std::vector<Rational> squares;
    std::vector<Rational> probs;
  };

  NoiseLaw(NoiseKind kind, std::string name, double k3, double k4)
      : kind_(kind), name_(std::move(name)), kappa3_(k3), kappa4_(k4) {}

  void build_cumulative() {
    cumulative_.resize(probs_.size());
    long double acc = 0.0L;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      acc += probs_[i];
      cumulative_[i] = static_cast<double>(acc);
    }
  }

  NoiseKind kind_;
  std::string name_;
  double kappa3_;
  double kappa4_;
  std::vector<double> atoms_;
  std::vector<double> probs_;
  std::vector<double> cumulative_;
  std::optional<ExactDiscrete> exact_;
  Sampler sampler_;
};

/// Parses the law names used in configuration files.
inline NoiseLaw make_noise_law(const std::string& kind) {
  if (kind == "gaussian") return NoiseLaw::gaussian();
  if (kind == "uniform" || kind == "uniform-sym") return NoiseLaw::uniform_sym();
  if (kind == "three-point") return NoiseLaw::three_point();
  if (kind == "four-point") return NoiseLaw::four_point();
  if (kind == "shifted-exponential") return NoiseLaw::shifted_exponential();
  throw InvalidArgument("unknown noise law '" + kind + "'");
}

}  // namespace spikefluct::ensemble
