// Empirical checks of the asymptotic-atom conditions on arbitrary Markov
// chains, and the geometric front bound
//   exp(-c a/b) <= (1 - a)^floor(1/b) <= exp(-a/(c b)).

#pragma once

#include "htexit/dynamics.hpp"
#include "htexit/exit.hpp"
#include "htexit/geometry.hpp"
#include "htexit/rng.hpp"

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace htexit {

using Membership = std::function<bool(const Vector&)>;

/// A Markov chain given only by its kernel and the sets the conditions use.
/// `step` must not keep state between calls.
struct AbstractChain {
  std::function<Vector(const Vector&, Stream&)> step;
  Membership in_atom;    // A(eps)
  Membership in_I_eps;   // I(eps)
  Membership in_I;       // I
  std::function<double(double)> gamma;  // scale gamma(eta)
  std::string name;
};

struct RateEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct AtomDiagnostics {
  /// min / max over atom starts of P(exit I(eps) within T/eta, location in B)
  /// divided by gamma(eta) T / eta.
  RateEstimate exit_rate_lower;
  RateEstimate exit_rate_upper;
  /// max over I(eps) starts of P(stay in I(eps) \ A(eps) beyond T/eta),
  /// divided by gamma(eta) T / eta.
  RateEstimate stranded;
  /// min over I(eps) starts of P(hit A(eps) within T/eta).
  RateEstimate return_probability;
  std::uint64_t horizon_steps = 0;
  std::size_t n = 0;
  double eta = 0.0;
  double eps = 0.0;
  double T = 0.0;
};

struct AtomCheckOptions {
  std::size_t n = 1000;
  std::uint64_t seed = 0xA70;
  int threads = 1;
};

/// B is tested on the first state outside I(eps).
AtomDiagnostics estimate_atom_rates(const AbstractChain& chain, double eta, double eps, double T,
                                    const Membership& B, const std::vector<Vector>& atom_starts,
                                    const std::vector<Vector>& I_eps_starts,
                                    const AtomCheckOptions& options = {});

/// 1D chain on I = (-1, 1) with atom {|x| < 0.1} at 0. Every step exits to
/// x = 2 with probability p; otherwise the state moves one level toward the
/// atom (levels 0.1 + 0.8 j / k0, j = 1..k0) or stays at 0. The exit time is
/// geometric(p) from every start and gamma(eta) = p.
AbstractChain synthetic_geometric_chain(double p_exit, int atom_return_steps);

/// Level j of the synthetic chain (j = 0 is the atom point 0).
Vector synthetic_level(int j, int atom_return_steps);

/// Truncated SGD chain with A(eps) = B_eps(0) and I(eps) = I_eps.
AbstractChain truncated_chain(const ChainConfig& config, const DomainSpec& domain, double eps,
                              const ScalingPrediction& prediction);

/// Exit steps of `chain` from `start` (first state outside I), capped.
std::uint64_t chain_exit_steps(const AbstractChain& chain, const Vector& start,
                               std::uint64_t cap, Stream& rng);

struct GeomFrontBounds {
  double lower = 0.0;
  double exact = 0.0;
  double upper = 0.0;
  bool holds = false;
};

GeomFrontBounds geom_front_bounds(const std::function<double(double)>& a_fn,
                                  const std::function<double(double)>& b_fn, double c, double eps);

/// Scans eps = eps_min * 2^i up to eps_start and returns the largest grid
/// eps with the sandwich holding at it and every smaller grid point (0 when
/// it already fails at eps_min).
double geom_front_threshold(const std::function<double(double)>& a_fn,
                            const std::function<double(double)>& b_fn, double c,
                            double eps_start, double eps_min);

void write_atom_csv_header(std::ostream& os);
void write_atom_csv_row(std::ostream& os, const std::string& label, const AtomDiagnostics& d);

}  // namespace htexit
