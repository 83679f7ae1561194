#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "oracles.hpp"
#include "support.hpp"
#include "tailcal/error.hpp"
#include "tailcal/theory.hpp"

using namespace tailcal;
using namespace tailcal::theory;
using testing::gaussian;
using testing::gaussian1;

TEST_CASE("identical estimates give a zero error and a zero lower bound") {
  const auto p = gaussian1(0.0, 1.0);
  const auto q = gaussian1(0.4, 0.9);
  const auto check = check_bound(p, q, q, 20000, 1);
  CHECK(check.epsilon == 0.0);
  CHECK(check.lower == 0.0);
  CHECK(check.upper > 0.0);
  CHECK(check.mc_samples == 20000);
  CHECK(check.holds());
}

TEST_CASE("estimate equal to the source reduces to d2 - 1") {
  const auto p = gaussian1(0.0, 1.0);
  const auto q = gaussian1(0.5, 1.1);
  const auto check = check_bound(p, q, p, 400000, 3);
  const double d2 = oracle::d2_quadrature(0.5, 1.1, 0.0, 1.0);
  CHECK(std::abs(check.epsilon - (d2 - 1.0)) < 4.0 * check.mc_stderr);
  CHECK(check.lower == doctest::Approx(std::pow(std::sqrt(d2) - 1.0, 2)).epsilon(1e-8));
  CHECK(check.upper == doctest::Approx(d2 + 1.0).epsilon(1e-8));
}

TEST_CASE("bound sandwich on random convergent triples") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto t = random_convergent_triple(seed);
    const auto check = check_bound(t.p, t.q, t.q_star, 200000, seed);
    CHECK(check.lower <= check.upper);
    CHECK(check.holds(3.0));

    const double dq = oracle::d2_quadrature(t.q.mean[0], t.q.std[0], t.p.mean[0], t.p.std[0]);
    const double ds = oracle::d2_quadrature(t.q_star.mean[0], t.q_star.std[0], t.p.mean[0], t.p.std[0]);
    CHECK(check.lower == doctest::Approx(std::pow(std::sqrt(dq) - std::sqrt(ds), 2)).epsilon(1e-7));
    CHECK(check.upper == doctest::Approx(dq + ds).epsilon(1e-8));

    const auto reference = oracle::epsilon_monte_carlo(t.p.mean[0], t.p.std[0], t.q.mean[0], t.q.std[0],
                                                       t.q_star.mean[0], t.q_star.std[0], 200000, 1000 + seed);
    const double spread = std::hypot(check.mc_stderr, reference.std_error);
    CHECK(std::abs(check.epsilon - reference.mean) < 5.0 * spread);
  }
}

TEST_CASE("bound check refuses divergent or undersized inputs") {
  const auto p = gaussian({0, 0}, {1, 1});
  const auto fine = gaussian({0, 0}, {1, 1.2});
  const auto wide = gaussian({0, 0}, {1, 2});
  try {
    check_bound(p, fine, wide, 20000, 1);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.dimension() == 1);
    CHECK(std::string(e.what()).find("dimension 1") != std::string::npos);
  }
  CHECK_THROWS_AS(check_bound(p, fine, fine, kMinBoundSamples - 1, 1), ValidationError);
  CHECK_THROWS_AS(check_bound(p, gaussian1(0, 1), fine, 20000, 1), ValidationError);
}

TEST_CASE("bound check is reproducible and independent of the worker count") {
  const auto t = random_convergent_triple(42);
  ::setenv("TAILCAL_THREADS", "1", 1);
  const auto one = check_bound(t.p, t.q, t.q_star, 150000, 9);
  ::setenv("TAILCAL_THREADS", "5", 1);
  const auto five = check_bound(t.p, t.q, t.q_star, 150000, 9);
  ::unsetenv("TAILCAL_THREADS");
  CHECK(one.epsilon == five.epsilon);
  CHECK(one.mc_stderr == five.mc_stderr);
}

TEST_CASE("monte carlo d2 agrees with the closed form") {
  const auto q = gaussian1(1.0, 1.0);
  const auto p = gaussian1(0.0, 1.0);
  const auto mc = monte_carlo_d2(q, p, 1000000, 5);
  CHECK(std::abs(mc.mean - std::exp(1.0)) < 4.0 * mc.std_error);
  CHECK(std::abs(mc.mean - std::exp(1.0)) / std::exp(1.0) < 0.02);
}

TEST_CASE("crossover example") {
  const auto c = crossover_points(gaussian1(0, 1), gaussian1(0, 2));
  const double expected = std::sqrt((8.0 / 3.0) * std::log(2.0));
  CHECK(c.tau1 == doctest::Approx(-expected).epsilon(1e-14));
  CHECK(c.tau2 == doctest::Approx(expected).epsilon(1e-14));
  CHECK(c.tau2 == doctest::Approx(1.359556).epsilon(1e-6));
  CHECK(c.tau1 == -c.tau2);

  const auto roots = oracle::density_crossings(0, 1, 0, 2);
  REQUIRE(roots.size() == 2);
  CHECK(std::abs(roots[0] - c.tau1) < 1e-8);
  CHECK(std::abs(roots[1] - c.tau2) < 1e-8);
}

TEST_CASE("crossovers match root finding on random pairs") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto [p, q] = random_crossover_pair(seed);
    const auto c = crossover_points(p, q);
    CHECK(c.tau1 < c.tau2);

    const double ma = p.mean[0], sa = p.std[0], mb = q.mean[0], sb = q.std[0];
    const auto roots = oracle::density_crossings(ma, sa, mb, sb);
    REQUIRE(roots.size() == 2);
    CHECK(std::abs(roots[0] - c.tau1) < 1e-8);
    CHECK(std::abs(roots[1] - c.tau2) < 1e-8);

    for (double tau : {c.tau1, c.tau2}) {
      const double ratio = oracle::normal_pdf(tau, mb, sb) / oracle::normal_pdf(tau, ma, sa);
      CHECK(std::abs(ratio - 1.0) < 1e-9);
    }

    // w - 1 is negative strictly between the crossings and positive outside.
    for (int i = 0; i < 1000; ++i) {
      const double x = mb - 6.0 * sb + 12.0 * sb * i / 999.0;
      if (std::abs(x - c.tau1) < 1e-9 || std::abs(x - c.tau2) < 1e-9) continue;
      const double log_w = oracle::normal_log_pdf(x, mb, sb) - oracle::normal_log_pdf(x, ma, sa);
      const bool inside = c.tau1 < x && x < c.tau2;
      CHECK((inside ? log_w < 0.0 : log_w > 0.0));
    }
  }
}

TEST_CASE("crossover preconditions") {
  CHECK_THROWS_AS(crossover_points(gaussian1(0, 2), gaussian1(0, 1)), ValidationError);
  CHECK_THROWS_AS(crossover_points(gaussian1(0, 1), gaussian1(3, 1)), ValidationError);
  CHECK_THROWS_AS(crossover_points(gaussian({0, 0}, {1, 1}), gaussian({0, 0}, {2, 2})), ValidationError);
}

TEST_CASE("library bisection agrees with the closed form") {
  const auto p = gaussian1(0.3, 0.8);
  const auto q = gaussian1(-0.5, 1.9);
  const auto c = crossover_points(p, q);
  CHECK(std::abs(bisect_crossing(p, q, c.tau1 - 5.0, 0.5 * (c.tau1 + c.tau2)) - c.tau1) < 1e-10);
  CHECK(std::abs(bisect_crossing(p, q, 0.5 * (c.tau1 + c.tau2), c.tau2 + 5.0) - c.tau2) < 1e-10);
}

TEST_CASE("theory suite passes at reduced size") {
  TheorySuiteOptions options;
  options.bound_cases = 5;
  options.crossover_cases = 10;
  options.mc_samples = 100000;
  const auto report = run_theory_suite(options);
  CHECK(report.bounds.size() >= 5);
  CHECK(report.crossovers.size() == 10);
  CHECK(report.all_pass());
}
