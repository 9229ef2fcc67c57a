// Experiment configuration files.
//
//   [section]
//   key = value          # comment
//   list = 1, 2, inf     # comma-separated; "inf" is +infinity
//
// Sections and keys are listed in README.md. Unknown sections or keys are
// errors.

#pragma once

#include "htexit/fields.hpp"
#include "htexit/geometry.hpp"
#include "htexit/noise.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace htexit {

/// Malformed file, missing key, or out-of-range value (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A name that does not resolve, e.g. an unknown field (CLI exit code 3).
class ResolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  // [model]
  std::string field = "paper-U";
  int dim = 1;
  std::optional<std::vector<double>> origin;
  double sigma = 1.0;

  // [noise]
  double alpha = 1.5;
  double x_min = 1.0;
  double c_pareto = 1.0;
  double c_normal = 0.0;
  std::string spectral = "symmetric";
  double p_plus = 0.5;
  double p_minus = 0.5;
  std::vector<std::vector<double>> atoms;  // direction components then weight

  // [domain]
  std::string domain = "interval";
  double left = -1.0;
  double right = 1.0;
  double radius = 1.0;
  std::vector<double> center, lo, hi;

  // [experiment]
  std::vector<double> etas;
  std::vector<double> bs;
  std::size_t samples = 20;
  std::uint64_t cap = 10'000'000;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  double gamma = 1.0;
  std::optional<std::vector<double>> start;
  std::string output = "out";
  bool predict = true;

  // [measure]
  std::size_t measure_n = 100000;
  double measure_dt = 1e-2;
  double delta_bar = 0.0;
  double t_bar = 0.0;

  // [search]
  int k_max = 6;
  int population = 96;
  int iterations = 30;
  int restarts = 3;

  // [atoms]
  std::vector<double> atom_p = {1e-2, 1e-3};
  int atom_return_steps = 5;
  std::size_t atom_n = 2000;
  double atom_eta = 0.01;
  double atom_eps = 0.1;
  double atom_T = 0.0;  // <= 0: 3 x flow envelope
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

/// A config file that parses back to the same ExperimentConfig.
std::string to_manifest(const ExperimentConfig& cfg);

/// Config turned into model objects. Fields, domain and start are in shifted
/// coordinates (the configured origin maps to 0).
struct ResolvedExperiment {
  FieldPair fields;
  TailModel noise;
  DomainSpec domain;
  Vector origin;
  Vector start;
};

ResolvedExperiment resolve(const ExperimentConfig& cfg);

}  // namespace htexit
