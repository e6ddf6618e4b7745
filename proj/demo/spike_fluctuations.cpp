// Theory versus simulation for one localized spike, Gaussian and three-point noise.

#include <cmath>
#include <iostream>

#include "spikefluct/ensemble.hpp"
#include "spikefluct/spikes.hpp"
#include "spikefluct/stats.hpp"

using namespace spikefluct;

int main() {
  const Index m = 100, n = 200;
  const auto sigma = spectra::make_covariance(spectra::CovarianceRecipe::identity(), m, 0);
  const auto signal = spikes::SignalModel::localized(m, n, std::sqrt(5.25));
  const auto pop = spikes::deform(sigma, signal, 0.1);
  std::cout << "edge lambda_+ = " << pop.edge.lambda_plus << ", threshold = " << pop.threshold << '\n';

  for (const char* name : {"gaussian", "three-point"}) {
    const auto law = ensemble::make_noise_law(name);
    const auto th = spikes::asymptotic_quantities(sigma, signal, pop, law);
    ensemble::SpikeMcOptions opt;
    opt.reps = 500;
    opt.master_seed = 11;
    const auto samples = ensemble::run_spike_mc(sigma, signal, law, opt);
    const auto fl = samples.fluctuations(0);
    std::cout << name << ": theta_1 = " << th.spikes[0].theta << ", var sqrt(N)(lambda_1 - theta_1) = "
              << stats::variance(fl) << " (theory " << th.v(0, 0) + th.theta_covariance()(0, 0)
              << "), KS to normal = " << stats::ks_normal_fit(fl) << '\n';
  }
}
