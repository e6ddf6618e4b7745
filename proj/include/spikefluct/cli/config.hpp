#pragma once

// JSON configuration reading for the command-line tool. Requires
// the single-header nlohmann/json (json.hpp) on the include path.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spikefluct/ensemble.hpp"
#include "spikefluct/error.hpp"
#include "spikefluct/linalg.hpp"
#include "spikefluct/spectra.hpp"
#include "spikefluct/spikes.hpp"

namespace spikefluct::cli {

using json = nlohmann::ordered_json;

inline constexpr std::uint64_t kDefaultSeed = 20240601;

/// Malformed or schema-violating configuration (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Parses JSON text, reporting line and column on syntax errors.
inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str(), path);
}

/// Reads fields of one JSON object and rejects keys that were never asked for.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!obj_.contains(key)) return fallback;
    return convert<T>(obj_.at(key), key);
  }

  template <class T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!obj_.contains(key)) throw ConfigError(where() + ": missing required field '" + key + "'");
    return convert<T>(obj_.at(key), key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!obj_.contains(key)) throw ConfigError(where() + ": missing required field '" + key + "'");
    return obj_.at(key);
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where() + ": unknown field '" + it.key() + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "config field '" + path_ + "'"; }

  template <class T>
  T convert(const json& v, const std::string& key) const {
    const std::string loc = "config field '" + child(key) + "'";
    try {
      if constexpr (std::is_same_v<T, std::uint64_t> || std::is_same_v<T, Index> || std::is_same_v<T, unsigned>) {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
          throw ConfigError(loc + ": expected a non-negative integer");
        }
        return v.get<T>();
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(loc + ": expected a number");
        return v.get<double>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(loc + ": expected true or false");
        return v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(loc + ": expected a string");
        return v.get<std::string>();
      } else {
        return v.get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError(loc + ": " + e.what());
    }
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::vector<double> to_doubles(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError("config field '" + path + "': expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError("config field '" + path + "': expected an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline Matrix to_matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw ConfigError("config field '" + path + "': expected an array of rows");
  const auto first = to_doubles(v.front(), path);
  Matrix out(static_cast<Index>(v.size()), static_cast<Index>(first.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto row = to_doubles(v[i], path);
    if (row.size() != first.size()) throw ConfigError("config field '" + path + "': ragged rows");
    for (std::size_t j = 0; j < row.size(); ++j) out(static_cast<Index>(i), static_cast<Index>(j)) = row[j];
  }
  return out;
}

/// Population covariance: {"type": "identity" | "diag" | "toeplitz" | "haar" | "matrix", ...}.
struct SigmaSpec {
  spectra::CovarianceRecipe recipe;
  std::uint64_t seed = 0;  // haar only
  bool has_seed = false;
};

inline SigmaSpec parse_sigma(const json& v, const std::string& path) {
  Fields f(v, path);
  SigmaSpec s;
  const std::string type = f.require<std::string>("type");
  if (type == "identity") {
    s.recipe = spectra::CovarianceRecipe::identity();
  } else if (type == "diag") {
    s.recipe = spectra::CovarianceRecipe::diag(to_doubles(f.raw("entries"), f.child("entries")));
  } else if (type == "toeplitz") {
    s.recipe = spectra::CovarianceRecipe::toeplitz(f.require<double>("rho"));
  } else if (type == "haar") {
    s.recipe = spectra::CovarianceRecipe::haar_rotated(f.get<double>("low", 1.0), f.get<double>("high", 1.5));
    s.has_seed = f.has("seed");
    s.seed = f.get<std::uint64_t>("seed", 0);
  } else if (type == "matrix") {
    s.recipe = spectra::CovarianceRecipe::from_matrix(to_matrix(f.raw("rows"), f.child("rows")));
  } else {
    throw ConfigError("config field '" + f.child("type") + "': unknown covariance type '" + type + "'");
  }
  f.finish();
  return s;
}

inline spectra::CovarianceModel build_sigma(const SigmaSpec& spec, Index m, std::uint64_t master_seed) {
  const std::uint64_t seed = spec.has_seed ? spec.seed : stream_id({master_seed, 0x5167A});
  return spectra::make_covariance(spec.recipe, m, seed);
}

/// Signal: {"type": "localized", "d2": [...]} puts sqrt(d2_k) at (k, k);
/// {"type": "factors", "u": rows, "d": [...], "v": rows};
/// {"type": "dense", "rows": ...};
/// {"type": "mixture", "centers": rows (M x K as K arrays of length M),
///  "alpha": [...] optional, "labels_seed": u64}.
struct SignalSpec {
  std::string type = "localized";
  std::vector<double> d2;
  Matrix u, v, dense, centers;
  std::vector<double> d, alpha;
  std::uint64_t labels_seed = 0;
};

inline SignalSpec parse_signal(const json& v, const std::string& path) {
  Fields f(v, path);
  SignalSpec s;
  s.type = f.require<std::string>("type");
  if (s.type == "localized") {
    s.d2 = to_doubles(f.raw("d2"), f.child("d2"));
  } else if (s.type == "factors") {
    s.u = to_matrix(f.raw("u"), f.child("u"));
    s.d = to_doubles(f.raw("d"), f.child("d"));
    s.v = to_matrix(f.raw("v"), f.child("v"));
  } else if (s.type == "dense") {
    s.dense = to_matrix(f.raw("rows"), f.child("rows"));
  } else if (s.type == "mixture") {
    s.centers = to_matrix(f.raw("centers"), f.child("centers")).transpose();
    if (f.has("alpha")) s.alpha = to_doubles(f.raw("alpha"), f.child("alpha"));
    s.labels_seed = f.get<std::uint64_t>("labels_seed", 0);
  } else {
    throw ConfigError("config field '" + f.child("type") + "': unknown signal type '" + s.type + "'");
  }
  f.finish();
  return s;
}

inline spikes::SignalModel build_signal(const SignalSpec& spec, Index m, Index n) {
  if (spec.type == "localized") {
    if (spec.d2.empty() || static_cast<Index>(spec.d2.size()) > std::min(m, n)) {
      throw ConfigError("localized signal needs between 1 and min(M, N) strengths");
    }
    Matrix dense = Matrix::Zero(m, n);
    for (std::size_t k = 0; k < spec.d2.size(); ++k) {
      if (!(spec.d2[k] > 0.0)) throw ConfigError("localized signal strengths must be positive");
      dense(static_cast<Index>(k), static_cast<Index>(k)) = std::sqrt(spec.d2[k]);
    }
    return spikes::SignalModel::from_dense(dense);
  }
  if (spec.type == "factors") {
    Eigen::Map<const Vector> d(spec.d.data(), static_cast<Index>(spec.d.size()));
    if (spec.u.rows() != m || spec.v.rows() != n) throw ConfigError("signal factors do not match (M, N)");
    return spikes::SignalModel::from_factors(spec.u, d, spec.v);
  }
  if (spec.type == "dense") {
    if (spec.dense.rows() != m || spec.dense.cols() != n) throw ConfigError("dense signal does not match (M, N)");
    return spikes::SignalModel::from_dense(spec.dense);
  }
  if (spec.centers.rows() != m) throw ConfigError("mixture centers must have length M");
  const Index k = spec.centers.cols();
  std::vector<Index> labels = spec.alpha.empty() ? ensemble::balanced_labels(n, k)
                                                 : ensemble::random_labels(n, spec.alpha, spec.labels_seed);
  return ensemble::mixture_signal(spec.centers, std::move(labels)).signal;
}

}  // namespace spikefluct::cli
