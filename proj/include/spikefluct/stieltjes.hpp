#pragma once

// Real-axis solver for the self-consistent equation
//
//     z = -1/m + phi * integral s / (1 + s m) nu(ds)
//
// to the right of the spectrum, where m is negative, increasing and inverse
// to f(w) = -1/w + phi * integral s / (1 + s w) nu(ds). Every functional of
// Sigma is evaluated from the atoms of nu, never from matrix inverses.

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "spikefluct/error.hpp"
#include "spikefluct/spectra.hpp"

namespace spikefluct::stieltjes {

using spectra::SpectralDistribution;

struct FValues {
  double f;
  double f1;  // f'
  double f2;  // f''
};

/// f, f' and f'' at w. Throws DomainError when 1 + s w vanishes for an atom.
inline FValues f_eval(double w, const SpectralDistribution& nu, double phi) {
  if (w == 0.0) throw DomainError("f is singular at w = 0");
  long double s0 = 0.0L, s1 = 0.0L, s2 = 0.0L;
  for (const auto& atom : nu.atoms()) {
    const double s = atom.value;
    const double denom = 1.0 + s * w;
    if (std::abs(denom) < 1e-14) {
      std::ostringstream msg;
      msg << "f has a pole at w = " << w << " from the atom s = " << s;
      throw DomainError(msg.str());
    }
    const long double r = static_cast<long double>(s) / denom;
    s0 += atom.weight * r;
    s1 += atom.weight * r * r;
    s2 += atom.weight * r * r * r;
  }
  const long double lw = w;
  return {static_cast<double>(-1.0L / lw + phi * s0),
          static_cast<double>(1.0L / (lw * lw) - phi * s1),
          static_cast<double>(-2.0L / (lw * lw * lw) + 2.0L * phi * s2)};
}

/// Right edge of the limiting spectrum: w_+ (the critical point of f on
/// (-1/sigma_1, 0)), lambda_+ = f(w_+) and f''(w_+).
struct EdgeData {
  double w_plus;
  double lambda_plus;
  double f_second_at_w_plus;
  double phi;

  /// BBP threshold -1/w_+ for the population spikes sigma_tilde.
  double threshold() const { return -1.0 / w_plus; }
};

/// Locates the unique zero of f' on (-1/sigma_1, 0): a 64-point grid that
/// accumulates at both endpoints is scanned for the first sign change, which
/// is refined by bisection and polished by Newton steps.
inline EdgeData find_w_plus(const SpectralDistribution& nu, double phi) {
  const double top = nu.max_value();
  if (!(top > 0.0)) throw InvalidArgument("spectral distribution is degenerate (sigma_1 = 0)");
  if (!(phi > 0.0)) throw InvalidArgument("aspect ratio phi must be positive");
  const double span = 1.0 / top;
  const auto fprime = [&](double w) { return f_eval(w, nu, phi).f1; };

  // Distances from the endpoints, log-spaced in [1e-12, 0.5] * span.
  std::vector<double> grid;
  constexpr int kHalf = 32;
  for (int k = 0; k < kHalf; ++k) {
    const double t = std::pow(10.0, -12.0 + (12.0 + std::log10(0.5)) * k / (kHalf - 1));
    grid.push_back(-span + t * span);
  }
  for (int k = kHalf - 1; k >= 0; --k) {
    const double t = std::pow(10.0, -12.0 + (12.0 + std::log10(0.5)) * k / (kHalf - 1));
    grid.push_back(-t * span);
  }
  double lo = 0.0, hi = 0.0;
  bool bracketed = false;
  double prev_w = grid.front();
  double prev_v = fprime(prev_w);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double w = grid[i];
    const double v = fprime(w);
    if (prev_v < 0.0 && v >= 0.0) {
      lo = prev_w;
      hi = w;
      bracketed = true;
      break;
    }
    prev_w = w;
    prev_v = v;
  }
  if (!bracketed) {
    std::ostringstream msg;
    msg << "f' has no sign change on (-1/sigma_1, 0); scanned grid:";
    for (const double w : grid) msg << ' ' << w << ':' << fprime(w);
    throw NumericalError(msg.str());
  }
  for (int it = 0; it < 400 && hi - lo > 1e-14 * span; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (fprime(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double w = 0.5 * (lo + hi);
  FValues fv = f_eval(w, nu, phi);
  for (int it = 0; it < 3; ++it) {
    if (!(fv.f2 > 0.0)) break;
    const double cand = w - fv.f1 / fv.f2;
    if (!(cand > -span && cand < 0.0)) break;
    const FValues cv = f_eval(cand, nu, phi);
    if (std::abs(cv.f1) >= std::abs(fv.f1)) break;
    w = cand;
    fv = cv;
  }
  return {w, fv.f, fv.f2, phi};
}

/// Scale factor (f''/2)^{1/3} for Tracy-Widom edge fluctuations.
///
/// The edge scale is sometimes written with lambda_+ as the argument of f'',
/// but f takes w-arguments; the consistent reading used here is f''(w_+).
inline double tracy_widom_scale(const EdgeData& edge) {
  return std::cbrt(edge.f_second_at_w_plus / 2.0);
}

/// m(z) for real z > lambda_+, i.e. the root of f(m) = z in (w_+, 0).
inline double solve_m(double z, const SpectralDistribution& nu, double phi, const EdgeData& edge) {
  if (!(z >= edge.lambda_plus + 1e-8)) {
    std::ostringstream msg;
    msg << "m(z) is only available for real z > lambda_+ = " << edge.lambda_plus << " (got z = " << z
        << ")";
    throw DomainError(msg.str());
  }
  // f(w) >= -1/w on (w_+, 0), so f(-1/z) >= z brackets the root.
  double lo = edge.w_plus;
  double hi = -1.0 / z;
  if (hi <= lo) hi = 0.5 * lo;
  double m = hi;
  const double tol = 1e-15 * std::max(1.0, std::abs(z));
  for (int it = 0; it < 300; ++it) {
    const FValues fv = f_eval(m, nu, phi);
    const double r = fv.f - z;
    if (std::abs(r) <= tol) break;
    if (r > 0.0) {
      hi = m;
    } else {
      lo = m;
    }
    double next = m - r / fv.f1;
    if (!(fv.f1 > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == m || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(m)) {
      m = next;
      break;
    }
    m = next;
  }
  return m;
}

/// Divided difference of f between two points of (w_+, 0); equals f' when
/// the points coincide.
inline double f_divided_difference(double a, double b, const SpectralDistribution& nu, double phi) {
  long double acc = 0.0L;
  for (const auto& atom : nu.atoms()) {
    const long double s = atom.value;
    acc += atom.weight * s * s / ((1.0L + s * a) * (1.0L + s * b));
  }
  return static_cast<double>(1.0L / (static_cast<long double>(a) * b) - phi * acc);
}

/// m[z_k, z_j] = (m(z_k) - m(z_j)) / (z_k - z_j), with m'(z) on the diagonal.
///
/// Evaluated as 1 / f[m(z_k), m(z_j)], which is exact algebra and avoids the
/// cancellation of the difference quotient when z_k is close to z_j.
inline double m_divided_difference(double zk, double zj, const SpectralDistribution& nu, double phi,
                                   const EdgeData& edge) {
  const double mk = solve_m(zk, nu, phi, edge);
  const double mj = zk == zj ? mk : solve_m(zj, nu, phi, edge);
  return 1.0 / f_divided_difference(mk, mj, nu, phi);
}

inline double m_derivative(double z, const SpectralDistribution& nu, double phi, const EdgeData& edge) {
  return m_divided_difference(z, z, nu, phi, edge);
}

struct ThetaValues {
  double theta;
  double theta_prime;
};

/// theta(s) = s + phi * integral s x / (s - x) nu(dx) and its derivative,
/// the almost-sure limit of the sample spike induced by a population spike s.
inline ThetaValues theta_map(double sigma_tilde, const SpectralDistribution& nu, double phi,
                             const EdgeData& edge) {
  const double threshold = edge.threshold();
  if (!(sigma_tilde > threshold)) {
    std::ostringstream msg;
    msg << "population spike " << sigma_tilde << " is not above the threshold " << threshold;
    throw SubcriticalError(msg.str(), threshold);
  }
  long double t0 = 0.0L, t1 = 0.0L;
  for (const auto& atom : nu.atoms()) {
    const double gap = sigma_tilde - atom.value;
    if (std::abs(gap) < 1e-10 * sigma_tilde) {
      std::ostringstream msg;
      msg << "population spike " << sigma_tilde << " is within 1e-10 of the eigenvalue " << atom.value;
      throw SingularityError(msg.str());
    }
    const long double r = static_cast<long double>(atom.value) / gap;
    t0 += atom.weight * r;
    t1 += atom.weight * r * r;
  }
  return {static_cast<double>(sigma_tilde + phi * sigma_tilde * t0),
          static_cast<double>(1.0L - phi * t1)};
}

inline ThetaValues theta_map(double sigma_tilde, const SpectralDistribution& nu, double phi) {
  return theta_map(sigma_tilde, nu, phi, find_w_plus(nu, phi));
}

}  // namespace spikefluct::stieltjes
