// Monte Carlo estimates of the limiting jump measures.
//
// Chk^(k)|b(B) integrates 1{endpoint in B} over k jumps w_j drawn from
// nu_alpha x S (nu_alpha[x, inf) = x^-alpha) and k - 1 ordered jump times.
// The first jump acts at the origin; the endpoint is the path value right
// after jump k. Magnitudes come from Pareto(alpha, delta) (restricted mass
// delta^-alpha per jump), optionally mixed evenly with Pareto(alpha, u) for
// an upper cutoff u near the truncation level. Jump times on [0, t_bar] are
// uniformly (volume t_bar^(k-1) / (k-1)!) or from an even mixture of uniform
// ordered times and exponential gaps at the flow's relaxation scale,
// weighted by the inverse mixture density. For uniform-sphere noise, later
// jump directions can be concentrated near the first one, again reweighted.
//
// The noise scale c_pareto * x_min is not part of these measures; it enters
// the time scale through H.

#pragma once

#include "htexit/fields.hpp"
#include "htexit/geometry.hpp"
#include "htexit/noise.hpp"

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace htexit {

using StateEvent = std::function<bool(const Vector&)>;

struct MeasureEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
  int k = 0;
  double b = kInf;
  double delta_bar = 0.0;
  double t_bar = 0.0;
};

enum class TimeProposal { Uniform, Mixture };
enum class MagnitudeProposal { Pure, Mixture };

struct MeasureOptions {
  std::size_t n = 100000;
  std::uint64_t seed = 0x3EA5;
  int threads = 1;
  /// Flow step between jumps.
  double dt = 1e-2;
  /// Split samples over spectral atom combinations when there are at most
  /// this many of them.
  int max_strata = 256;
  TimeProposal time_proposal = TimeProposal::Mixture;
  /// Mean of the exponential gaps; <= 0 uses min(t_bar / k, 0.5 / |Da(0)|).
  double gap_scale = 0.0;
  MagnitudeProposal magnitude_proposal = MagnitudeProposal::Mixture;
  /// Lower end of the second magnitude component; <= 0 uses b / (2 |sigma(0)|)
  /// for finite b and 2 delta otherwise.
  double upper_cutoff = 0.0;
  /// Uniform-sphere noise, k >= 2: later directions are drawn half from the
  /// spectral law and half from von Mises-Fisher around the first jump's
  /// direction with this concentration. <= 0 disables.
  double direction_concentration = 20.0;
};

/// Chk^(k)|b(B). Throws RuntimeFailure ("delta_bar too aggressive") when no
/// sample hits B but plans with a jump below delta_bar do.
MeasureEstimate estimate_check_measure(const FieldPair& fields, const StateEvent& event, int k,
                                       double b, const TailModel& noise, double delta_bar,
                                       double t_bar, const MeasureOptions& options = {});

/// Several events evaluated on one shared sample set.
std::vector<MeasureEstimate> estimate_check_measures(const FieldPair& fields,
                                                     const std::vector<StateEvent>& events, int k,
                                                     double b, const TailModel& noise,
                                                     double delta_bar, double t_bar,
                                                     const MeasureOptions& options = {});

struct ExitRateOptions {
  MeasureOptions measure;
  /// <= 0 selects the defaults described in the README.
  double delta_bar = 0.0;
  double t_bar = 0.0;
  JMethod j_method = JMethod::Auto;
  SearchOptions search;
  /// Half-width of the boundary shell diagnostic, relative to dist(0, I^c).
  double shell_fraction = 1e-3;
};

struct ExitRate {
  JResult j;
  MeasureEstimate C;
  /// Mass of {|signed distance to the boundary| < shell} under the same
  /// measure. A diagnostic for the boundary-null condition, not a proof.
  MeasureEstimate boundary_shell;
  /// C consistent with 0 (value <= 2 std errors) or sigma(0) = 0 with b = inf.
  bool degenerate = false;
};

/// Default cutoffs used by exit_rate_constant.
double default_delta_bar(const FieldPair& fields, const DomainSpec& domain, double b, int J);
double default_t_bar(const FieldPair& fields, const DomainSpec& domain);

/// J = j_index(...) and C = Chk^(J)|b(I^c).
ExitRate exit_rate_constant(const FieldPair& fields, const DomainSpec& domain, double b,
                            const TailModel& noise, const ExitRateOptions& options = {});

struct LocationBin {
  std::string label;
  StateEvent contains;
};

/// {x <= left} and {x >= right} for an interval domain.
std::vector<LocationBin> interval_side_bins(const DomainSpec& domain);

struct LocationLaw {
  ExitRate rate;
  std::vector<std::string> labels;
  std::vector<MeasureEstimate> masses;
  std::vector<double> fractions;
  std::vector<double> fraction_std_errors;
};

/// Per-bin mass of Chk^(J)|b normalized by C. Bins should partition I^c.
/// Throws RuntimeFailure when the total mass is zero.
LocationLaw exit_location_law(const FieldPair& fields, const DomainSpec& domain, double b,
                              const TailModel& noise, const std::vector<LocationBin>& bins,
                              const ExitRateOptions& options = {});

void write_measure_csv_header(std::ostream& os);
void write_measure_csv_row(std::ostream& os, const MeasureEstimate& e);

}  // namespace htexit
