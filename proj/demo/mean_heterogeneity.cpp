// Calibrate DS_4 / RS_4 and test a two-cluster sample.

#include <iostream>

#include "spikefluct/hetero.hpp"

using namespace spikefluct;

int main() {
  const auto cv = hetero::calibrate(4, 100, 3000, 0.95, 5);
  std::cout << "cv_DS = " << cv.cv_ds << ", cv_RS = " << cv.cv_rs << '\n';

  const Index m = 100, n = 200;
  Stream stream(17, 0);
  Matrix data(m, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < m; ++i) data(i, j) = stream.normal();
    data(0, j) += j < n / 2 ? 1.5 : -1.5;
  }
  const auto d = hetero::detect(data, cv);
  std::cout << "DS = " << d.stats.ds << (d.reject_ds ? " (reject)" : "") << ", RS = " << d.stats.rs
            << (d.reject_rs ? " (reject)" : "") << '\n';
}
