#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "htexit/atoms.hpp"
#include "htexit/stats.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace htexit;

namespace {

std::vector<double> scaled_exit_times(const AbstractChain& c, double p, std::size_t n, std::uint64_t seed,
                                      const Vector& start = scalar_vector(0.0)) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(seed, i);
    t[i] = p * static_cast<double>(chain_exit_steps(c, start, 1'000'000'000, rng));
  }
  return t;
}

// P(geometric(p) <= s) for s > 0: the exact law of the synthetic exit time.
double geometric_cdf(double p, double steps) { return steps < 1 ? 0.0 : 1.0 - std::pow(1 - p, std::floor(steps)); }

const Membership kOutside = [](const Vector& x) { return std::abs(x[0]) >= 1.0; };
const Membership kNowhere = [](const Vector&) { return false; };

}  // namespace

TEST_CASE("synthetic chain exit times are geometric") {
  for (int k0 : {0, 3}) {
    const AbstractChain c = synthetic_geometric_chain(0.05, k0);
    // Exact law from every start, including the outer levels.
    for (int level : {0, k0}) {
      const double p = 0.05;
      auto t = scaled_exit_times(c, 1.0, 5000, 71 + level, synthetic_level(level, k0));
      // Discrete law: compare the CDFs at the integers only.
      std::sort(t.begin(), t.end());
      double d = 0.0;
      for (double s = 1; s <= t.back(); s += 1) {
        const double emp = static_cast<double>(std::upper_bound(t.begin(), t.end(), s) - t.begin()) / t.size();
        d = std::max(d, std::abs(emp - geometric_cdf(p, s)));
      }
      CHECK(d < ks_critical_value(t.size(), 0.01));
    }
  }
}

TEST_CASE("scaled synthetic exit times: near exponential for small p, not for large p") {
  const AbstractChain small = synthetic_geometric_chain(1e-3, 5);
  CHECK(ks_exponential_statistic(scaled_exit_times(small, 1e-3, 2000, 72)) < 0.05);
  const AbstractChain big = synthetic_geometric_chain(0.5, 5);
  CHECK(ks_exponential_statistic(scaled_exit_times(big, 0.5, 2000, 73)) > 0.2);
  CHECK_THROWS_AS(synthetic_geometric_chain(0.0, 1), InvalidArgument);
  CHECK_THROWS_AS(synthetic_geometric_chain(1.0, 1), InvalidArgument);
}

TEST_CASE("normalized atom exit rate on the synthetic chain") {
  // One step per horizon makes the normalized rate exactly 1: P(exit) / p.
  {
    const AbstractChain c = synthetic_geometric_chain(1e-2, 5);
    AtomCheckOptions opt;
    opt.n = 40000;
    const auto d = estimate_atom_rates(c, 0.01, 0.1, 0.01, kOutside, {scalar_vector(0.0)},
                                       {synthetic_level(5, 5)}, opt);
    CHECK(d.horizon_steps == 1);
    CHECK(std::abs(d.exit_rate_lower.value - 1.0) <= 3 * d.exit_rate_lower.std_error);
  }
  // Ten steps: (1 - (1 - p)^10) / (10 p) = 0.9955 for p = 1e-3.
  {
    const AbstractChain c = synthetic_geometric_chain(1e-3, 5);
    AtomCheckOptions opt;
    opt.n = 20000;
    const auto d = estimate_atom_rates(c, 0.01, 0.1, 0.1, kOutside, {scalar_vector(0.0)},
                                       {synthetic_level(5, 5), synthetic_level(2, 5)}, opt);
    CHECK(d.horizon_steps == 10);
    CHECK(std::abs(d.exit_rate_upper.value - 1.0) <= 3 * d.exit_rate_upper.std_error);
    CHECK(d.exit_rate_lower.value == d.exit_rate_upper.value);
    // From level 5 the atom is five steps away; ten steps suffice unless the chain exits.
    CHECK(d.return_probability.value > 0.98);
    CHECK(d.stranded.value == 0.0);
    for (const auto* r : {&d.exit_rate_lower, &d.exit_rate_upper, &d.stranded})
      CHECK(r->value >= 0.0);
  }
}

TEST_CASE("empty target and trapped chains") {
  const AbstractChain c = synthetic_geometric_chain(0.3, 2);
  const auto d = estimate_atom_rates(c, 0.1, 0.1, 1.0, kNowhere, {scalar_vector(0.0)}, {synthetic_level(2, 2)});
  CHECK(d.exit_rate_lower.value == 0.0);
  CHECK(d.exit_rate_upper.value == 0.0);

  AbstractChain trap = c;
  trap.step = [](const Vector& x, Stream&) { return x; };
  const auto t = estimate_atom_rates(trap, 0.1, 0.1, 1.0, kOutside, {scalar_vector(0.0), scalar_vector(0.05)},
                                     {scalar_vector(0.0)});
  CHECK(t.return_probability.value == 1.0);
  CHECK(t.exit_rate_upper.value == 0.0);

  CHECK_THROWS_AS(estimate_atom_rates(c, 0.1, 0.1, 1.0, kOutside, {}, {scalar_vector(0.0)}), InvalidArgument);
  CHECK_THROWS_AS(estimate_atom_rates(c, 0.1, 0.1, 1.0, kOutside, {scalar_vector(0.5)}, {scalar_vector(0.0)}),
                  InvalidArgument);
  AtomCheckOptions few;
  few.n = 99;
  CHECK_THROWS_AS(estimate_atom_rates(c, 0.1, 0.1, 1.0, kOutside, {scalar_vector(0.0)}, {scalar_vector(0.0)}, few),
                  InvalidArgument);
}

TEST_CASE("truncated chain returns to the atom") {
  const DomainSpec d = DomainSpec::interval(-2, 2);
  const FieldPair f = test::linear_field();
  const TailModel m = test::pareto_model(1.5);
  const double eta = 0.01, eps = 0.1;
  const ChainConfig cfg(f, m, eta, 1.2);
  const ScalingPrediction p(m, 1.2, 2, 0.3, 0.0);
  const AbstractChain c = truncated_chain(cfg, d, eps, p);
  const double T = 3.0 * default_envelope(f, d).time;
  AtomCheckOptions opt;
  opt.n = 500;
  const auto diag = estimate_atom_rates(c, eta, eps, T, [&d](const Vector& x) { return !d.contains(x); },
                                        {scalar_vector(0.0)}, start_sweep(d, eps), opt);
  CHECK(diag.return_probability.value > 0.95);
  CHECK(diag.stranded.value >= 0.0);
}

TEST_CASE("geometric front bounds") {
  SUBCASE("a = eps^2, b = eps") {
    const auto g = geom_front_bounds([](double e) { return e * e; }, [](double e) { return e; }, 1.1, 1e-3);
    CHECK(g.exact == doctest::Approx(std::exp(-1e-3)).epsilon(1e-6));
    CHECK(g.holds);
    CHECK(g.lower <= g.exact);
    CHECK(g.exact <= g.upper);
  }
  SUBCASE("a = b = eps") {
    const auto g = geom_front_bounds([](double e) { return e; }, [](double e) { return e; }, 1.01, 1e-4);
    CHECK(g.exact == doctest::Approx(std::exp(-1.0)).epsilon(1e-3));
    CHECK(g.lower == doctest::Approx(std::exp(-1.01)).epsilon(1e-12));
    CHECK(g.upper == doctest::Approx(std::exp(-1.0 / 1.01)).epsilon(1e-12));
    CHECK(g.holds);
  }
  SUBCASE("floor(1/b) = 0") {
    const auto g = geom_front_bounds([](double) { return 0.5; }, [](double) { return 2.0; }, 1.5, 0.1);
    CHECK(g.exact == 1.0);
  }
  SUBCASE("violation is reported, not thrown") {
    // a = b = 0.5: (1 - a)^2 = 0.25 lies below exp(-c) for c = 1.01.
    const auto g = geom_front_bounds([](double) { return 0.5; }, [](double) { return 0.5; }, 1.01, 0.5);
    CHECK_FALSE(g.holds);
  }
  SUBCASE("threshold") {
    auto a = [](double e) { return e; };
    const double t = geom_front_threshold(a, a, 1.01, 0.5, 1e-6);
    CHECK(t > 0.0);
    CHECK(t < 0.5);
    CHECK(geom_front_bounds(a, a, 1.01, t).holds);
  }
}

TEST_CASE("diagnostics CSV") {
  AtomDiagnostics d;
  d.eta = 0.01;
  d.n = 100;
  std::ostringstream os;
  write_atom_csv_header(os);
  write_atom_csv_row(os, "x", d);
  const std::string s = os.str();
  CHECK(s.find('\n') != std::string::npos);
  CHECK(s.substr(s.find('\n') + 1, 2) == "x,");
}
