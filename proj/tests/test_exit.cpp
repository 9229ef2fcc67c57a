#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "htexit/exit.hpp"
#include "htexit/stats.hpp"
#include "support.hpp"

#include <cmath>
#include <sstream>

using namespace htexit;
using htexit::test::pareto_model;

namespace {

const DomainSpec kBench = DomainSpec::interval(-2.0, 2.0);

std::vector<ExitRecord> bench_batch(std::vector<ExitCell> grid, std::size_t n, std::uint64_t seed,
                                    int threads = 1, double alpha = 1.5) {
  ExitBatchSpec spec;
  spec.grid = std::move(grid);
  spec.n = n;
  spec.master_seed = seed;
  spec.threads = threads;
  return exit_batch(spec, kBench, test::linear_field(), pareto_model(alpha), scalar_vector(0.0));
}

std::vector<ExitRecord> cell(const std::vector<ExitRecord>& all, double eta, double b) {
  std::vector<ExitRecord> out;
  for (const auto& r : all)
    if (r.eta == eta && r.b == b) out.push_back(r);
  return out;
}

double mean_steps(const std::vector<ExitRecord>& rs) {
  double s = 0.0;
  for (const auto& r : rs) s += static_cast<double>(r.steps);
  return s / static_cast<double>(rs.size());
}

}  // namespace

TEST_CASE("first exit: never-exiting setups are capped") {
  const TailModel m = pareto_model(1.5);
  DomainSpec::Predicate all;
  all.contains = [](const Vector&) { return true; };
  all.lo = scalar_vector(-1);
  all.hi = scalar_vector(1);
  Stream rng(61, 0);
  const ExitRecord r = first_exit(ChainConfig(test::linear_field(), m, 0.1), DomainSpec(all), scalar_vector(0.0), 500, rng);
  CHECK(r.reason == ExitReason::Capped);
  CHECK(r.steps == 500);
  CHECK(std::isnan(r.scaled_time));

  FieldPair quiet = test::linear_field();
  quiet.diffusion = [](const Vector&) -> Matrix { return Matrix::Zero(1, 1); };
  Stream rng2(61, 1);
  const ExitRecord q = first_exit(ChainConfig(quiet, m, 0.1), kBench, scalar_vector(1.5), 2000, rng2);
  CHECK(q.reason == ExitReason::Capped);

  Stream rng3(61, 2);
  CHECK_THROWS_AS(first_exit(ChainConfig(quiet, m, 0.1), kBench, scalar_vector(3.0), 10, rng3), InvalidArgument);
}

TEST_CASE("first exit records the first outside position") {
  const TailModel m = pareto_model(1.5);
  const ChainConfig cfg(test::linear_field(), m, 0.05);
  for (std::uint64_t i = 0; i < 50; ++i) {
    Stream rng(62, i);
    const ExitRecord r = first_exit(cfg, kBench, scalar_vector(0.0), 1000000, rng);
    REQUIRE(r.reason == ExitReason::Exited);
    CHECK_FALSE(kBench.contains(r.exit_location));
    // Replay: every earlier position lies in I.
    Stream again(62, i);
    ChainState s{scalar_vector(0.0), 0};
    for (std::uint64_t t = 0; t < r.steps; ++t) {
      REQUIRE(kBench.contains(s.position));
      s = step(cfg, s, again);
    }
    CHECK(s.position[0] == r.exit_location[0]);
  }
}

TEST_CASE("mean exit time on the linear benchmark") {
  const auto rs = bench_batch({{0.05, kInf}}, 200, 63);
  const double predicted = std::pow(2.0, 1.5) * std::pow(0.05, -1.5);
  CHECK(predicted == doctest::Approx(253).epsilon(0.01));
  const double mean = mean_steps(rs);
  CHECK(mean > 0.5 * predicted);
  CHECK(mean < 2.0 * predicted);
}

TEST_CASE("batches are deterministic and independent of thread count") {
  const std::vector<ExitCell> grid = {{0.1, kInf}, {0.1, 0.7}, {0.05, kInf}};
  const auto a = bench_batch(grid, 40, 64, 1), b = bench_batch(grid, 40, 64, 3), c = bench_batch(grid, 40, 64, 1);
  REQUIRE(a.size() == 120);
  std::ostringstream sa, sb, sc;
  write_records_csv(sa, a, 1);
  write_records_csv(sb, b, 1);
  write_records_csv(sc, c, 1);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str() == sc.str());
  // Canonical order.
  for (std::size_t i = 1; i < a.size(); ++i) {
    const auto& p = a[i - 1];
    const auto& q = a[i];
    CHECK((p.eta < q.eta || (p.eta == q.eta && (p.b < q.b || (p.b == q.b && p.sample_index < q.sample_index)))));
  }
  CHECK_THROWS_AS(bench_batch(grid, 0, 64), InvalidArgument);
}

TEST_CASE("predictions") {
  const TailModel m = pareto_model(1.2, 0.1);
  const ScalingPrediction inf(m, kInf, 1, 1.45, 0.01);
  CHECK(inf.predicted_slope() == doctest::Approx(-1.2));
  // Untruncated: gamma(eta) = C H(1/eta).
  CHECK(inf.gamma_of_eta(0.01) == doctest::Approx(1.45 * tail_H(m, 100.0)).epsilon(1e-12));
  const ScalingPrediction two(m, 0.4, 2, 0.8, 0.05);
  CHECK(two.predicted_slope() == doctest::Approx(-1.4));
  CHECK(ScalingPrediction(m, 0.28, 3, 1.0, 0.1).predicted_slope() == doctest::Approx(-1.6));
  // Intercept: log(1 / gamma(eta)) = intercept + slope log(eta) for pure Pareto.
  for (double eta : {0.1, 0.01, 0.003})
    CHECK(-std::log(two.gamma_of_eta(eta)) == doctest::Approx(two.predicted_intercept() + two.predicted_slope() * std::log(eta)).epsilon(1e-12));
  CHECK(two.gamma_of_eta(0.02) == doctest::Approx(0.8 * 0.02 * std::pow(rate_lambda(m, 0.02), 2)).epsilon(1e-12));
  CHECK_THROWS_AS(ScalingPrediction(m, kInf, 2, 1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(ScalingPrediction(m, 0.4, 0, 1.0, 0.0), InvalidArgument);
  // The b = inf column gets the untruncated scaled time.
  ExitBatchSpec spec;
  spec.grid = {{0.1, kInf}};
  spec.n = 3;
  spec.master_seed = 1;
  spec.predictions.emplace(kInf, ScalingPrediction(pareto_model(1.5), kInf, 1, 0.35, 0.0));
  const auto rs = exit_batch(spec, kBench, test::linear_field(), pareto_model(1.5), scalar_vector(0.0));
  for (const auto& r : rs)
    CHECK(r.scaled_time == doctest::Approx(0.35 * tail_H(pareto_model(1.5), 10.0) * r.steps).epsilon(1e-12));
}

TEST_CASE("slope fits") {
  std::vector<ExitRecord> rs;
  std::uint64_t i = 0;
  for (double eta : {0.1, 0.05, 0.02, 0.01}) {
    ExitRecord r;
    r.eta = eta;
    r.b = 0.5;
    r.sample_index = i++;
    r.steps = static_cast<std::uint64_t>(std::llround(3.0 * std::pow(eta, -2.0)));
    r.reason = ExitReason::Exited;
    r.exit_location = scalar_vector(3.0);
    rs.push_back(r);
  }
  const SlopeFit f = scaling_slope(rs);
  CHECK(f.slope == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(f.std_error < 1e-12);
  CHECK(f.points == 4);

  auto capped = rs;
  capped[1].reason = ExitReason::Capped;
  CHECK_THROWS_AS(scaling_slope(capped), InvalidArgument);
  auto mixed = rs;
  mixed[0].b = kInf;
  CHECK_THROWS_AS(scaling_slope(mixed), InvalidArgument);
  CHECK_THROWS_AS(scaling_slope({rs[0], rs[1]}), InvalidArgument);
}

TEST_CASE("two-jump slope on the linear benchmark") {
  const double b = 1.2;
  const std::vector<double> etas = {0.1, 0.05, 0.02, 0.01};
  std::vector<ExitCell> grid;
  for (double eta : etas) grid.push_back({eta, b});
  const auto rs = bench_batch(grid, 200, 65);
  const JResult j = j_index(kBench, test::linear_field(), b);
  CHECK(j.J == 2);
  const SlopeFit f = scaling_slope(rs);
  CHECK(f.slope == doctest::Approx(-2.0).epsilon(0.1));
}

TEST_CASE("KS against the unit exponential") {
  const TailModel m = pareto_model(1.5);
  // gamma(0.01) = C H(100) = 1e-6 for C = 1e-3.
  const ScalingPrediction p(m, kInf, 1, 1e-3, 0.0);
  REQUIRE(p.gamma_of_eta(0.01) == doctest::Approx(1e-6).epsilon(1e-12));
  auto records = [&](auto draw, std::size_t n) {
    std::vector<ExitRecord> rs(n);
    for (std::size_t i = 0; i < n; ++i) {
      rs[i].eta = 0.01;
      rs[i].reason = ExitReason::Exited;
      rs[i].steps = static_cast<std::uint64_t>(std::llround(draw(i) / 1e-6));
    }
    return rs;
  };
  Stream rng(66, 0);
  const auto expo = records([&](std::size_t) { return -std::log(rng.uniform()); }, 500);
  const KsResult k = ks_exponential(expo, p);
  CHECK(k.n == 500);
  CHECK(k.statistic < 0.061);
  CHECK(ks_critical_value(500, 0.05) == doctest::Approx(0.0607).epsilon(1e-3));
  const auto flat = records([](std::size_t) { return 1.0; }, 100);
  CHECK(ks_exponential(flat, p).statistic >= 0.5);
  CHECK_THROWS_AS(ks_exponential(records([](std::size_t) { return 1.0; }, 49), p), InvalidArgument);
  auto with_cap = expo;
  with_cap[3].reason = ExitReason::Capped;
  CHECK_THROWS_AS(ks_exponential(with_cap, p), InvalidArgument);
}

TEST_CASE("exit locations and independence on the symmetric benchmark") {
  const double eta = 0.02;
  const auto rs = bench_batch({{eta, kInf}}, 300, 67);
  ExitRateOptions opt;
  opt.measure.n = 20000;
  const auto bins = interval_side_bins(kBench);
  const LocationLaw law = exit_location_law(test::linear_field(), kBench, kInf, pareto_model(1.5), bins, opt);
  CHECK(exit_location_compare(rs, law, bins) < 0.1);

  const std::vector<LocationBin> one = {{"all", [](const Vector& x) { return !kBench.contains(x); }}};
  const LocationLaw single = exit_location_law(test::linear_field(), kBench, kInf, pareto_model(1.5), one, opt);
  CHECK(exit_location_compare(rs, single, one) == 0.0);
  CHECK_THROWS_AS(exit_location_compare(rs, single, bins), InvalidArgument);

  const ScalingPrediction p(pareto_model(1.5), kInf, 1, law.rate.C.value, law.rate.C.std_error);
  std::vector<double> t, left;
  for (const auto& r : rs) {
    t.push_back(p.gamma_of_eta(eta) * r.steps);
    left.push_back(r.exit_location[0] < 0 ? 1.0 : 0.0);
  }
  CHECK(std::abs(pearson_correlation(t, left)) < 0.15);
}

TEST_CASE("truncation slows exit") {
  const double eta = 0.05;
  const auto rs = bench_batch({{eta, kInf}, {eta, 1.2}, {eta, 0.7}}, 100, 68);
  const double m_inf = mean_steps(cell(rs, eta, kInf));
  const double m_12 = mean_steps(cell(rs, eta, 1.2));
  const double m_07 = mean_steps(cell(rs, eta, 0.7));
  CHECK(m_inf <= m_12);
  CHECK(m_12 <= m_07);
}

TEST_CASE("summaries flag capped cells") {
  ExitBatchSpec spec;
  spec.grid = {{0.01, 0.3}, {0.1, kInf}};
  spec.n = 5;
  spec.cap = 200;
  spec.master_seed = 69;
  const auto rs = exit_batch(spec, kBench, test::linear_field(), pareto_model(1.5), scalar_vector(0.0));
  const auto cells = summarize(rs);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].eta == 0.01);
  CHECK(cells[0].capped == 5);
  CHECK(cells[0].lower_bound);
  CHECK(cells[0].mean_steps == 200.0);
  std::ostringstream os;
  write_summary_csv(os, cells);
  CHECK(os.str().find(",true\n") != std::string::npos);
}

TEST_CASE("records CSV format") {
  ExitRecord r;
  r.eta = 0.05;
  r.b = kInf;
  r.sample_index = 7;
  r.steps = 123;
  r.scaled_time = 0.25;
  r.exit_location = Vector(2);
  r.exit_location << 1.5, -2;
  r.reason = ExitReason::Exited;
  r.seed_hi = 9;
  r.seed_lo = 7;
  std::ostringstream os;
  Vector off(2);
  off << 1, 1;
  write_records_csv(os, {r}, 2, &off);
  CHECK(os.str() ==
        "eta,b,sample_index,steps,scaled_time,exit_x_1,exit_x_2,reason,seed_hi,seed_lo\n"
        "0.05,inf,7,123,0.25,2.5,-1,Exited,9,7\n");
}

TEST_CASE("start sweep") {
  const auto pts = start_sweep(kBench, 0.1);
  REQUIRE(pts.size() == 5);
  CHECK(pts[0][0] == 0.0);
  for (const auto& p : pts) CHECK(shrink(kBench, 0.1).domain.contains(p));
  const auto ball = start_sweep(DomainSpec::ball(2, 1.0), 0.1);
  REQUIRE(ball.size() == 5);
  for (const auto& p : ball) CHECK(p.norm() < 0.9);
}
