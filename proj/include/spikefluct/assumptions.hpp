#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spikefluct/spectra.hpp"
#include "spikefluct/stieltjes.hpp"

namespace spikefluct::spectra {

/// One assumption: the measured value, the bound it is compared against and
/// a signed margin (positive when the assumption holds).
struct AssumptionCheck {
  std::string name;
  bool pass;
  double value;
  double bound;
  double margin;
};

struct AssumptionReport {
  AssumptionCheck aspect_lower;   // phi >= tau
  AssumptionCheck aspect_upper;   // phi <= 1/tau
  AssumptionCheck norm_bound;     // sigma_1 <= 1/tau
  AssumptionCheck small_mass;     // nu([0, tau]) <= 1 - tau
  AssumptionCheck edge_regular;   // w_+ + 1/sigma_1 >= tau

  std::vector<AssumptionCheck> all() const {
    return {aspect_lower, aspect_upper, norm_bound, small_mass, edge_regular};
  }
  bool all_pass() const {
    for (const auto& c : all()) {
      if (!c.pass) return false;
    }
    return true;
  }
};

/// Evaluates the standing assumptions on (Sigma, N) for a tolerance tau.
/// Violations are reported, never thrown.
inline AssumptionReport check_assumptions(const CovarianceModel& model, Index n, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in (0, 1)");
  if (n < 1) throw InvalidArgument("sample size must be positive");
  const double phi = static_cast<double>(model.dim()) / static_cast<double>(n);
  const SpectralDistribution nu = esd(model);
  const double sigma1 = model.eigenvalues()[0];
  AssumptionReport r;
  r.aspect_lower = {"phi >= tau", phi >= tau, phi, tau, phi - tau};
  r.aspect_upper = {"phi <= 1/tau", phi <= 1.0 / tau, phi, 1.0 / tau, 1.0 / tau - phi};
  r.norm_bound = {"sigma_1 <= 1/tau", sigma1 <= 1.0 / tau, sigma1, 1.0 / tau, 1.0 / tau - sigma1};
  const double mass = nu.mass_at_or_below(tau);
  r.small_mass = {"nu([0,tau]) <= 1 - tau", mass <= 1.0 - tau, mass, 1.0 - tau, 1.0 - tau - mass};
  if (sigma1 > 0.0) {
    const stieltjes::EdgeData edge = stieltjes::find_w_plus(nu, phi);
    const double v = edge.w_plus + 1.0 / sigma1;
    r.edge_regular = {"w_+ + 1/sigma_1 >= tau", v >= tau, v, tau, v - tau};
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.edge_regular = {"w_+ + 1/sigma_1 >= tau", false, nan, tau, nan};
  }
  return r;
}

}  // namespace spikefluct::spectra
