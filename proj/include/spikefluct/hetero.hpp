#pragma once

// Eigenvalue-ratio tests for mean heterogeneity in a K-cluster mixture
//
//     a_mu = c_{k(mu)} + Sigma^{1/2} w_mu,   H0: K = 1  vs  H1: 1 < K <= K*,
//
// with DS = (l_1 - l_K*)/(l_K* - l_{2K*-1}) and RS = (l_1 - l_K*)/(l_K* - l_{K*+1})
// computed from the scaled data N^{-1/2}[a_1, ..., a_N]. Critical values come
// from a square Gaussian Wishart calibration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spikefluct/ensemble.hpp"
#include "spikefluct/error.hpp"
#include "spikefluct/format.hpp"
#include "spikefluct/linalg.hpp"
#include "spikefluct/noise.hpp"
#include "spikefluct/parallel.hpp"
#include "spikefluct/rng.hpp"
#include "spikefluct/spectra.hpp"
#include "spikefluct/stats.hpp"

namespace spikefluct::hetero {

using ensemble::NoiseLaw;

inline constexpr std::uint64_t kCalibrationTag = 0xCA11B;
inline constexpr std::uint64_t kExperimentTag = 0xE4BE;

struct RatioStats {
  double ds;
  double rs;
};

/// Number of leading eigenvalues both statistics need.
inline Index eigenvalues_needed(Index kstar) { return std::max(2 * kstar - 1, kstar + 1); }

/// DS and RS from eigenvalues in non-increasing order.
///
/// For K* = 1 the DS denominator l_1 - l_1 vanishes identically while its
/// numerator does too; DS is defined as 0 there.
inline RatioStats ds_rs_stats(std::span<const double> eigs, Index kstar) {
  if (kstar < 1) throw InvalidArgument("K* must be at least 1");
  const Index need = eigenvalues_needed(kstar);
  if (static_cast<Index>(eigs.size()) < need) {
    throw InvalidArgument("ratio statistics need " + std::to_string(need) + " eigenvalues, got " +
                          std::to_string(eigs.size()));
  }
  const auto at = [&](Index i) { return eigs[static_cast<std::size_t>(i - 1)]; };
  const double num = at(1) - at(kstar);
  const double den_ds = at(kstar) - at(2 * kstar - 1);
  const double den_rs = at(kstar) - at(kstar + 1);
  RatioStats out{};
  if (kstar == 1) {
    out.ds = 0.0;
  } else if (den_ds == 0.0) {
    throw DegenerateSpectrumError("DS denominator l_K* - l_{2K*-1} is zero");
  } else {
    out.ds = num / den_ds;
  }
  if (den_rs == 0.0) throw DegenerateSpectrumError("RS denominator l_K* - l_{K*+1} is zero");
  out.rs = num / den_rs;
  return out;
}

struct CriticalValues {
  Index kstar = 4;
  Index nstar = 100;
  Index reps = 30000;
  double quantile = 0.95;
  std::uint64_t master_seed = 0;
  double cv_ds = 0.0;
  double cv_rs = 0.0;
};

/// Monte-Carlo null distribution of DS and RS from N* x N* Gaussian
/// matrices with entry variance 1/N*; nearest-rank quantiles.
inline CriticalValues calibrate(Index kstar, Index nstar, Index reps, double quantile, std::uint64_t master_seed,
                                unsigned threads = 0) {
  if (reps < 100) throw InvalidArgument("calibration needs at least 100 replications");
  if (nstar < eigenvalues_needed(kstar)) throw InvalidArgument("N* is too small for K*");
  std::vector<double> ds(static_cast<std::size_t>(reps)), rs(static_cast<std::size_t>(reps));
  const Index need = eigenvalues_needed(kstar);
  const NoiseLaw gauss = NoiseLaw::gaussian();
  parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t i) {
    Stream stream(master_seed, stream_id({kCalibrationTag, static_cast<std::uint64_t>(nstar), i}));
    Matrix x(nstar, nstar);
    gauss.fill(stream, x, 1.0 / std::sqrt(static_cast<double>(nstar)));
    const Vector ev = ensemble::top_eigs(x, need);
    const RatioStats st = ds_rs_stats(std::span<const double>(ev.data(), static_cast<std::size_t>(ev.size())), kstar);
    ds[i] = st.ds;
    rs[i] = st.rs;
  });
  CriticalValues cv;
  cv.kstar = kstar;
  cv.nstar = nstar;
  cv.reps = reps;
  cv.quantile = quantile;
  cv.master_seed = master_seed;
  cv.cv_ds = stats::quantile_nearest_rank(std::move(ds), quantile);
  cv.cv_rs = stats::quantile_nearest_rank(std::move(rs), quantile);
  return cv;
}

struct Decision {
  RatioStats stats;
  bool reject_ds;
  bool reject_rs;
};

/// Scales the M x N data by N^{-1/2}, optionally removes the row means, and
/// compares DS and RS with the critical values.
inline Decision detect(const Matrix& data, const CriticalValues& cv, bool center = false) {
  if (cv.kstar < 2) throw InvalidArgument("detection needs K* >= 2");
  Matrix y = data / std::sqrt(static_cast<double>(data.cols()));
  if (center) y.colwise() -= y.rowwise().mean();
  const Vector ev = ensemble::top_eigs(y, eigenvalues_needed(cv.kstar));
  const RatioStats st = ds_rs_stats(std::span<const double>(ev.data(), static_cast<std::size_t>(ev.size())), cv.kstar);
  return {st, st.ds > cv.cv_ds, st.rs > cv.cv_rs};
}

/// Covariance family of the size and power tables: 1 = I, 2 = Toeplitz(0.1),
/// 3 = Haar-rotated with Unif(1, 1.5) eigenvalues.
inline spectra::CovarianceRecipe table_recipe(int family) {
  switch (family) {
    case 1: return spectra::CovarianceRecipe::identity();
    case 2: return spectra::CovarianceRecipe::toeplitz(0.1);
    case 3: return spectra::CovarianceRecipe::haar_rotated(1.0, 1.5);
  }
  throw InvalidArgument("covariance family must be 1, 2 or 3");
}

/// Cluster centers for K = 2, 3, 4, each column summing with the others to 0.
inline Matrix draw_centers(Index k, Index m, Stream& stream, double scale = 1.0) {
  Matrix c = Matrix::Zero(m, k);
  const auto fill = [&](Index col, double lo, double hi) {
    for (Index i = 0; i < m; ++i) c(i, col) = stream.uniform(lo, hi);
  };
  switch (k) {
    case 1: return c;
    case 2: fill(0, 0.0, 0.3); break;
    case 3:
      fill(0, 0.0, 0.4);
      fill(1, -0.3, 0.0);
      break;
    case 4:
      fill(0, 0.0, 0.45);
      fill(1, -0.3, 0.0);
      fill(2, -0.1, 0.2);
      break;
    default: throw InvalidArgument("centers are defined for K = 1..4");
  }
  c.col(k - 1) = -c.leftCols(k - 1).rowwise().sum();
  return scale * c;
}

/// One experiment cell. `clusters` = 1 is the null hypothesis. A non-empty
/// `fixed_center` replaces the random centers by (c, -c).
struct CellSpec {
  int sigma = 1;
  std::string law = "gaussian";
  Index n = 200;  // samples
  Index m = 100;  // dimension
  Index clusters = 1;
  double center_scale = 1.0;
  Vector fixed_center;

  std::string shape() const { return "(" + std::to_string(n) + "," + std::to_string(m) + ")"; }
  std::uint64_t key() const {
    std::uint64_t law_code = 0;
    for (const char ch : law) law_code = law_code * 131 + static_cast<unsigned char>(ch);
    return stream_id({static_cast<std::uint64_t>(sigma), law_code, static_cast<std::uint64_t>(n),
                      static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(clusters),
                      static_cast<std::uint64_t>(std::llround(center_scale * 1e6)),
                      static_cast<std::uint64_t>(fixed_center.size())});
  }
};

struct CellResult {
  CellSpec spec;
  Index reps = 0;
  Index rejections_ds = 0;
  Index rejections_rs = 0;
  std::vector<double> ds, rs;  // per-replication statistics

  double rate_ds() const { return reps == 0 ? 0.0 : static_cast<double>(rejections_ds) / static_cast<double>(reps); }
  double rate_rs() const { return reps == 0 ? 0.0 : static_cast<double>(rejections_rs) / static_cast<double>(reps); }
};

struct ExperimentReport {
  std::vector<CellResult> cells;
  CriticalValues cv;
  std::uint64_t master_seed = 0;
  Index reps = 0;

  /// Table layout: one row per (Sigma, K, statistic), one column per
  /// (law, shape), in order of first appearance.
  void write_table_csv(std::ostream& os, int digits = 10) const {
    std::vector<std::string> cols;
    std::vector<std::pair<int, Index>> rows;
    std::map<std::pair<std::string, std::string>, const CellResult*> lookup;
    for (const auto& c : cells) {
      const std::string col = c.spec.law + " " + c.spec.shape();
      if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
      const std::pair<int, Index> row{c.spec.sigma, c.spec.clusters};
      if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
      lookup[{row_key(row), col}] = &c;
    }
    os << "sigma,K,statistic";
    for (const auto& c : cols) os << ',' << c;
    os << '\n';
    for (const auto& row : rows) {
      for (const char* stat : {"DS", "RS"}) {
        os << "Sigma" << row.first << ',' << row.second << ',' << stat << '_' << cv.kstar;
        for (const auto& c : cols) {
          const auto it = lookup.find({row_key(row), c});
          os << ',';
          if (it == lookup.end()) continue;
          os << format_double(std::string(stat) == "DS" ? it->second->rate_ds() : it->second->rate_rs(), digits);
        }
        os << '\n';
      }
    }
  }

 private:
  static std::string row_key(const std::pair<int, Index>& r) {
    return std::to_string(r.first) + ":" + std::to_string(r.second);
  }
};

struct ExperimentOptions {
  unsigned threads = 0;
  bool center = false;
  bool keep_statistics = false;
};

/// Runs every cell for `reps` replications. Covariances are built once per
/// cell; centers and noise are drawn per replication from the stream
/// (master_seed, stream_id({tag, cell key, rep})).
inline ExperimentReport run_experiment(const std::vector<CellSpec>& grid, Index reps, const CriticalValues& cv,
                                       std::uint64_t master_seed, const ExperimentOptions& opt = {}) {
  if (reps < 0) throw InvalidArgument("replication count must be non-negative");
  ExperimentReport report;
  report.cv = cv;
  report.master_seed = master_seed;
  report.reps = reps;
  if (reps == 0) return report;

  std::vector<spectra::CovarianceModel> sigmas;
  std::vector<NoiseLaw> laws;
  sigmas.reserve(grid.size());
  for (const auto& spec : grid) {
    if (spec.fixed_center.size() != 0 && spec.fixed_center.size() != spec.m) {
      throw InvalidArgument("fixed center must have dimension M");
    }
    sigmas.push_back(spectra::make_covariance(table_recipe(spec.sigma), spec.m,
                                              stream_id({master_seed, spec.key()})));
    laws.push_back(ensemble::make_noise_law(spec.law));
  }
  const std::size_t per_cell = static_cast<std::size_t>(reps);
  std::vector<Decision> decisions(grid.size() * per_cell);
  parallel_for(decisions.size(), opt.threads, [&](std::size_t task) {
    const std::size_t cell = task / per_cell;
    const std::size_t rep = task % per_cell;
    const CellSpec& spec = grid[cell];
    Stream stream(master_seed, stream_id({kExperimentTag, spec.key(), rep}));
    Matrix data(spec.m, spec.n);
    if (spec.clusters > 1) {
      Matrix centers;
      if (spec.fixed_center.size() != 0) {
        centers.resize(spec.m, 2);
        centers.col(0) = spec.center_scale * spec.fixed_center;
        centers.col(1) = -centers.col(0);
      } else {
        centers = draw_centers(spec.clusters, spec.m, stream, spec.center_scale);
      }
      const std::vector<Index> labels = ensemble::balanced_labels(spec.n, centers.cols());
      Matrix noise(spec.m, spec.n);
      laws[cell].fill(stream, noise, 1.0);
      data = sigmas[cell].apply_sqrt(noise);
      for (Index j = 0; j < spec.n; ++j) data.col(j) += centers.col(labels[static_cast<std::size_t>(j)]);
    } else {
      Matrix noise(spec.m, spec.n);
      laws[cell].fill(stream, noise, 1.0);
      data = sigmas[cell].apply_sqrt(noise);
    }
    decisions[task] = detect(data, cv, opt.center);
  });

  for (std::size_t cell = 0; cell < grid.size(); ++cell) {
    CellResult r;
    r.spec = grid[cell];
    r.reps = reps;
    for (std::size_t rep = 0; rep < per_cell; ++rep) {
      const Decision& d = decisions[cell * per_cell + rep];
      r.rejections_ds += d.reject_ds ? 1 : 0;
      r.rejections_rs += d.reject_rs ? 1 : 0;
      if (opt.keep_statistics) {
        r.ds.push_back(d.stats.ds);
        r.rs.push_back(d.stats.rs);
      }
    }
    report.cells.push_back(std::move(r));
  }
  return report;
}

/// The 12 cells of the size table: Sigma_{1,2,3} x {gaussian, uniform} x
/// {(200,100), (100,200)}.
inline std::vector<CellSpec> table_grid(Index clusters, std::vector<int> sigmas = {1, 2, 3},
                                        std::vector<std::string> laws = {"gaussian", "uniform"},
                                        std::vector<std::pair<Index, Index>> shapes = {{200, 100}, {100, 200}}) {
  std::vector<CellSpec> grid;
  for (const int s : sigmas) {
    for (const auto& law : laws) {
      for (const auto& [n, m] : shapes) {
        CellSpec c;
        c.sigma = s;
        c.law = law;
        c.n = n;
        c.m = m;
        c.clusters = clusters;
        grid.push_back(c);
      }
    }
  }
  return grid;
}

inline ExperimentReport run_size_experiment(const std::vector<CellSpec>& grid, Index reps, const CriticalValues& cv,
                                            std::uint64_t master_seed, const ExperimentOptions& opt = {}) {
  for (const auto& c : grid) {
    if (c.clusters != 1) throw InvalidArgument("size experiment cells must have K = 1");
  }
  return run_experiment(grid, reps, cv, master_seed, opt);
}

inline ExperimentReport run_power_experiment(Index clusters, std::vector<CellSpec> grid, Index reps,
                                             const CriticalValues& cv, std::uint64_t master_seed,
                                             const ExperimentOptions& opt = {}) {
  if (clusters < 2 || clusters > 4) throw InvalidArgument("power experiments use K = 2, 3 or 4");
  for (auto& c : grid) c.clusters = clusters;
  return run_experiment(grid, reps, cv, master_seed, opt);
}

}  // namespace spikefluct::hetero
