// First-exit experiments and their comparison with the predicted scaling.
//
// Time scale: gamma(eta) = C * eta * lambda(eta; g)^J. Without truncation
// J = 1 and this is C * H(eta^-g). Mean exit steps scale as 1 / gamma(eta),
// so the log-log slope of mean steps against eta is -(1 + J (g alpha - 1)).

#pragma once

#include "htexit/dynamics.hpp"
#include "htexit/geometry.hpp"
#include "htexit/measures.hpp"
#include "htexit/stats.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

namespace htexit {

enum class ExitReason { Exited, Capped, NonFinite };
const char* to_string(ExitReason r);

struct ExitRecord {
  double eta = 0.0;
  double b = kInf;
  std::uint64_t sample_index = 0;
  std::uint64_t steps = 0;
  /// gamma(eta) * steps; NaN without a prediction.
  double scaled_time = 0.0;
  Vector exit_location;
  ExitReason reason = ExitReason::Capped;
  std::uint64_t seed_hi = 0;
  std::uint64_t seed_lo = 0;
};

class ScalingPrediction {
 public:
  ScalingPrediction(const TailModel& noise, double b, int J, double C, double C_std_error,
                    double gamma = 1.0);

  int J() const { return J_; }
  double b() const { return b_; }
  double C() const { return C_; }
  double C_std_error() const { return C_se_; }
  bool truncated() const { return b_ != kInf; }

  double gamma_of_eta(double eta) const;
  /// -(1 + J (gamma alpha - 1)); with b = inf, J = 1 and gamma = 1 this is -alpha.
  double predicted_slope() const;
  /// Intercept of log mean steps against log eta. Exact for pure Pareto
  /// noise; otherwise the tangent line at eta_ref.
  double predicted_intercept(double eta_ref = 0.01) const;

 private:
  TailModel noise_;
  double b_;
  int J_;
  double C_, C_se_;
  double gamma_;
};

/// Runs until the first position outside I. The exit location is that
/// position (after the update that left I).
ExitRecord first_exit(const ChainConfig& config, const DomainSpec& domain, const Vector& start,
                      std::uint64_t cap, Stream& rng,
                      const ScalingPrediction* prediction = nullptr);

struct ExitCell {
  double eta = 0.0;
  double b = kInf;
};

struct ExitBatchSpec {
  std::vector<ExitCell> grid;
  std::size_t n = 20;
  std::uint64_t cap = 10'000'000;
  int threads = 1;
  std::uint64_t master_seed = 0;
  double gamma = 1.0;
  /// Predictions keyed by b, used for scaled_time.
  std::map<double, ScalingPrediction> predictions;
};

/// n records per cell. Sample i of every cell uses the stream
/// (master_seed, i), so cells share noise. Output is sorted by
/// (eta, b, sample_index).
std::vector<ExitRecord> exit_batch(const ExitBatchSpec& spec, const DomainSpec& domain,
                                   const FieldPair& fields, const TailModel& noise,
                                   const Vector& start);

struct CellSummary {
  double eta = 0.0;
  double b = kInf;
  std::size_t n = 0;
  double mean_steps = 0.0;
  double stderr_steps = 0.0;
  double mean_scaled_time = 0.0;
  std::size_t capped = 0;
  std::size_t non_finite = 0;
  /// Any capped record: mean_steps underestimates the true mean.
  bool lower_bound = false;
};

std::vector<CellSummary> summarize(const std::vector<ExitRecord>& records);

struct SlopeFit {
  double slope = 0.0;
  double std_error = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
};

/// OLS of log mean steps on log eta for records sharing one b. Throws when
/// fewer than three eta values are present or any record is not Exited.
SlopeFit scaling_slope(const std::vector<ExitRecord>& records);

struct KsResult {
  double statistic = 0.0;
  std::size_t n = 0;
};

/// KS distance of gamma(eta) * steps from Exp(1). Needs n >= 50 exited records.
KsResult ks_exponential(const std::vector<ExitRecord>& records,
                        const ScalingPrediction& prediction);

/// Total-variation distance between the empirical exit-location histogram
/// and the predicted fractions.
double exit_location_compare(const std::vector<ExitRecord>& records, const LocationLaw& law,
                             const std::vector<LocationBin>& bins);

/// Five start points in I_eps (the origin first) for uniformity sweeps.
std::vector<Vector> start_sweep(const DomainSpec& domain, double eps);

/// eta,b,sample_index,steps,scaled_time,exit_x_1..exit_x_m,reason,seed_hi,seed_lo
/// `offset` is added to exit locations (undoing an origin shift).
void write_records_csv(std::ostream& os, const std::vector<ExitRecord>& records, int dim,
                       const Vector* offset = nullptr);
void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& cells);

}  // namespace htexit
