#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "htexit/flow.hpp"
#include "htexit/rng.hpp"
#include "support.hpp"

#include <cmath>
#include <sstream>

using namespace htexit;

namespace {
JumpPlan plan1d(std::vector<double> w, std::vector<double> t, double T) {
  JumpPlan p;
  for (double x : w) p.jumps.push_back(scalar_vector(x));
  p.times = std::move(t);
  p.horizon = T;
  return p;
}
}  // namespace

TEST_CASE("linear flow") {
  const FieldPair f = test::linear_field();
  CHECK(std::abs(integrate_flow(f, scalar_vector(1.0), 1.0)[0] - std::exp(-1.0)) < 1e-9);
  CHECK(integrate_flow(f, scalar_vector(0.7), 0.0)[0] == 0.7);
  CHECK(integrate_flow(test::zero_field(), scalar_vector(0.7), 5.0)[0] == 0.7);
  CHECK_THROWS_AS(integrate_flow(f, scalar_vector(1.0), -1.0), InvalidArgument);
}

TEST_CASE("flow semigroup") {
  for (const char* name : {"quadratic", "quartic"}) {
    const FieldPair f = builtin_field(name, 2);
    Vector x(2);
    x << 0.9, -1.4;
    for (auto [s, t] : {std::pair{0.3, 0.7}, {1.234, 2.1}, {0.05, 3.0}}) {
      const Vector direct = integrate_flow(f, x, s + t);
      const Vector composed = integrate_flow(f, integrate_flow(f, x, s), t);
      CHECK((direct - composed).norm() < 1e-8);
    }
  }
  const FieldPair u = test::shifted_potential_field();
  const Vector x = scalar_vector(-0.5);
  CHECK(std::abs(integrate_flow(u, x, 2.5)[0] - integrate_flow(u, integrate_flow(u, x, 0.8), 1.7)[0]) < 1e-8);
}

TEST_CASE("RK4 order") {
  const FieldPair f = test::linear_field();
  const double exact = std::exp(-2.0);
  double prev = -1.0;
  for (double dt : {0.2, 0.1, 0.05}) {
    const double err = std::abs(integrate_flow(f, scalar_vector(1.0), 2.0, {dt})[0] - exact);
    if (prev > 0) CHECK(prev / err >= 12.0);
    prev = err;
  }
}

TEST_CASE("perturbed paths") {
  const FieldPair lin = test::linear_field();
  SUBCASE("no jumps is the plain flow") {
    const PerturbedPath p = perturbed_path(lin, scalar_vector(1.0), plan1d({}, {}, 1.5), kInf);
    CHECK(p.end[0] == integrate_flow(lin, scalar_vector(1.0), 1.5)[0]);
  }
  SUBCASE("zero drift, saturated jumps") {
    const PerturbedPath p = perturbed_path(test::zero_field(), scalar_vector(0.25), plan1d({3, 3}, {0.3, 0.9}, 1.0), 1.0);
    CHECK(p.end[0] == doctest::Approx(2.25).epsilon(1e-15));
  }
  SUBCASE("one jump then decay") {
    const PerturbedPath p = perturbed_path(lin, scalar_vector(0.0), plan1d({2}, {1.0}, 2.0), kInf);
    CHECK(std::abs(p.end[0] - 2 * std::exp(-1.0)) < 1e-8);
    CHECK(std::abs(p.end[0] - 0.73576) < 1e-5);
  }
  SUBCASE("jump off the grid is applied exactly") {
    const PerturbedPath p = perturbed_path(lin, scalar_vector(0.0), plan1d({1}, {0.12345}, 1.0), kInf, {0.1});
    CHECK(std::abs(p.end[0] - std::exp(-(1.0 - 0.12345))) < 1e-6);
  }
  SUBCASE("dense output") {
    IntegratorConfig cfg{0.01, true};
    const PerturbedPath p = perturbed_path(lin, scalar_vector(0.0), plan1d({1, 1}, {0.5, 1.0}, 1.5), kInf, cfg);
    CHECK(p.points.front().t == 0.0);
    CHECK(p.points.back().t == doctest::Approx(1.5));
    CHECK(p.pre_jump.size() == 2);
    CHECK(p.post_jump[0][0] == doctest::Approx(1.0));
    std::ostringstream os;
    write_path_csv(os, p);
    CHECK(os.str().rfind("t,x_1\n", 0) == 0);
  }
  SUBCASE("bad plans") {
    CHECK_THROWS_AS(plan1d({1, 1}, {0.5, 0.5}, 1.0).validate(), InvalidArgument);
    CHECK_THROWS_AS(plan1d({1}, {0.0}, 1.0).validate(), InvalidArgument);
    CHECK_THROWS_AS(plan1d({1}, {2.0}, 1.0).validate(), InvalidArgument);
    CHECK_THROWS_AS(plan1d({1}, {0.5, 0.7}, 1.0).validate(), InvalidArgument);
  }
}

TEST_CASE("inactive truncation changes nothing") {
  const FieldPair f = builtin_field("quartic", 2);
  Stream rng(51, 0);
  for (int rep = 0; rep < 50; ++rep) {
    JumpPlan p;
    p.horizon = 3.0;
    double t = 0.0, wmax = 0.0;
    for (int j = 0; j < 3; ++j) {
      Vector w(2);
      w << rng.normal(), rng.normal();
      wmax = std::max(wmax, w.norm());
      p.jumps.push_back(w);
      t += 0.9 * rng.uniform() + 0.01;
      p.times.push_back(t);
    }
    const Vector a = perturbed_path(f, Vector::Zero(2), p, kInf).end;
    const Vector b = perturbed_path(f, Vector::Zero(2), p, 2 * wmax).end;
    REQUIRE((a - b).norm() < 1e-12);
  }
}

TEST_CASE("endpoint after the last jump") {
  const FieldPair lin = test::linear_field();
  const IntegratorConfig cfg;
  SUBCASE("k = 1 unrolled") {
    const double x0 = 0.8, w = 2.0, b = 0.6, t1 = 0.4;
    const double y = integrate_flow(lin, scalar_vector(x0), t1, cfg)[0];
    const Vector e = endpoint_after_last_jump(lin, scalar_vector(x0), plan1d({w}, {t1}, 1.0), b, cfg);
    CHECK(e[0] == doctest::Approx(y + 0.6).epsilon(1e-14));
  }
  SUBCASE("two unit jumps") {
    const Vector e = endpoint_after_last_jump(lin, scalar_vector(0.0), plan1d({1, 1}, {1, 2}, 3.0), kInf, cfg);
    CHECK(std::abs(e[0] - (std::exp(-1.0) + 1.0)) < 1e-8);
    CHECK(std::abs(e[0] - 1.36788) < 1e-5);
  }
  SUBCASE("time shift at an equilibrium start") {
    const Vector a = endpoint_after_last_jump(lin, scalar_vector(0.0), plan1d({1, -0.4}, {0.5, 1.1}, 2.0), kInf, cfg);
    const Vector b = endpoint_after_last_jump(lin, scalar_vector(0.0), plan1d({1, -0.4}, {1.5, 2.1}, 3.0), kInf, cfg);
    CHECK(std::abs(a[0] - b[0]) < 1e-10);
  }
  SUBCASE("k = 0 rejected") {
    CHECK_THROWS_AS(endpoint_after_last_jump(lin, scalar_vector(0.0), plan1d({}, {}, 1.0), kInf, cfg),
                    InvalidArgument);
  }
  SUBCASE("inner-loop variant agrees") {
    const JumpPlan p = plan1d({0.7, -1.9, 0.3}, {0.2, 0.9, 1.0}, 2.0);
    std::vector<double> rel = {0.0, 0.7, 0.8};
    const Vector a = endpoint_after_last_jump(lin, scalar_vector(0.0), p, 0.8, {1e-3});
    // jump_chain_endpoint takes gaps relative to the first jump; with x0 = 0
    // at equilibrium the leading flow segment is trivial.
    const Vector b = jump_chain_endpoint(lin, scalar_vector(0.0), p.jumps, rel, 0.8, 1e-3);
    CHECK(std::abs(a[0] - b[0]) < 1e-9);
  }
}

TEST_CASE("hitting times") {
  const FieldPair lin = test::linear_field();
  const auto t = hitting_time(lin, scalar_vector(1.0), std::exp(-2.0), 10.0);
  REQUIRE(t.has_value());
  CHECK(std::abs(*t - 2.0) < 1e-4);
  CHECK(hitting_time(lin, scalar_vector(0.01), 0.1, 10.0).value() == 0.0);
  CHECK_FALSE(hitting_time(test::zero_field(), scalar_vector(1.0), 0.1, 10.0).has_value());
  CHECK_FALSE(hitting_time(lin, scalar_vector(1.0), 1e-3, 1.0).has_value());
}

TEST_CASE("escape reach is monotone in k and b") {
  // Largest |endpoint| over a fixed random plan family; plans for k jumps
  // extend plans for k - 1 by one more jump (a zero jump reproduces k - 1).
  const FieldPair lin = test::linear_field();
  Stream rng(52, 0);
  const int plans = 300;
  std::vector<std::vector<double>> mags(plans), gaps(plans);
  for (int i = 0; i < plans; ++i)
    for (int j = 0; j < 4; ++j) {
      mags[i].push_back((rng.uniform() < 0.5 ? -1 : 1) * 3 * std::pow(rng.uniform(), -0.7));
      gaps[i].push_back(0.01 + rng.uniform());
    }
  auto reach = [&](int k, double b) {
    double best = 0.0;
    for (int i = 0; i < plans; ++i) {
      // Prefixes only: the k-jump family contains the (k-1)-jump family via w_k = 0.
      for (int kk = 1; kk <= k; ++kk) {
        std::vector<Vector> w;
        std::vector<double> t;
        double s = 0.0;
        for (int j = 0; j < kk; ++j) {
          w.push_back(scalar_vector(mags[i][j]));
          t.push_back(s);
          s += gaps[i][j];
        }
        best = std::max(best, std::abs(jump_chain_endpoint(lin, scalar_vector(0.0), w, t, b, 1e-2)[0]));
      }
    }
    return best;
  };
  for (double b : {0.2, 0.5, 1.0}) {
    double prev = 0.0;
    for (int k = 1; k <= 4; ++k) {
      const double r = reach(k, b);
      CHECK(r >= prev);
      prev = r;
    }
  }
  for (int k = 1; k <= 3; ++k) {
    double prev = 0.0;
    for (double b : {0.1, 0.3, 0.6, 1.5}) {
      const double r = reach(k, b);
      CHECK(r >= prev);
      prev = r;
    }
  }
}
