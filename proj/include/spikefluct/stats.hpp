#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "spikefluct/error.hpp"

namespace spikefluct::stats {

/// Neumaier-compensated accumulator in extended precision.
class CompensatedSum {
 public:
  void add(long double x) {
    const long double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  long double value() const { return sum_ + carry_; }

 private:
  long double sum_ = 0.0L;
  long double carry_ = 0.0L;
};

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw InvalidArgument("mean of an empty sample");
  CompensatedSum s;
  for (const double x : xs) s.add(x);
  return static_cast<double>(s.value() / static_cast<long double>(xs.size()));
}

/// Unbiased sample variance.
inline double variance(std::span<const double> xs) {
  if (xs.size() < 2) throw InvalidArgument("variance needs at least two samples");
  const double mu = mean(xs);
  CompensatedSum s;
  for (const double x : xs) s.add(static_cast<long double>(x - mu) * (x - mu));
  return static_cast<double>(s.value() / static_cast<long double>(xs.size() - 1));
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw InvalidArgument("median of an empty sample");
  const std::size_t n = xs.size();
  std::sort(xs.begin(), xs.end());
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Nearest-rank quantile: the ceil(q n)-th smallest observation.
inline double quantile_nearest_rank(std::vector<double> xs, double q) {
  if (xs.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(q > 0.0 && q <= 1.0)) throw InvalidArgument("quantile level must lie in (0, 1]");
  std::sort(xs.begin(), xs.end());
  const double rank = std::ceil(q * static_cast<double>(xs.size()) - 1e-12);
  const std::size_t idx = static_cast<std::size_t>(std::max(rank, 1.0)) - 1;
  return xs[std::min(idx, xs.size() - 1)];
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("KS distance of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// KS distance between a sample and the normal law with the sample's own
/// mean and standard deviation.
inline double ks_normal_fit(std::vector<double> xs) {
  const double mu = mean(xs);
  const double sd = std::sqrt(variance(xs));
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = normal_cdf((xs[i] - mu) / sd);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

struct Histogram {
  std::vector<double> edges;  // size bins + 1
  std::vector<std::size_t> counts;
};

/// Histogram with Freedman-Diaconis bin width over [lo, hi].
inline Histogram histogram_fd(std::vector<double> xs, double lo, double hi) {
  if (xs.size() < 2) throw InvalidArgument("histogram needs at least two samples");
  std::sort(xs.begin(), xs.end());
  const auto at = [&](double q) {
    const double pos = q * static_cast<double>(xs.size() - 1);
    const std::size_t k = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(k);
    return k + 1 < xs.size() ? xs[k] * (1.0 - frac) + xs[k + 1] * frac : xs[k];
  };
  const double iqr = at(0.75) - at(0.25);
  double width = 2.0 * iqr / std::cbrt(static_cast<double>(xs.size()));
  if (!(width > 0.0)) width = (hi - lo) / 10.0;
  if (!(hi > lo)) hi = lo + 1.0;
  const std::size_t bins =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil((hi - lo) / width)), 1, 1000);
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  }
  h.counts.assign(bins, 0);
  for (const double x : xs) {
    if (x < lo || x > hi) continue;
    std::size_t b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

}  // namespace spikefluct::stats
