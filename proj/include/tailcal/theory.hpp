#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tailcal/gaussians.hpp"

namespace tailcal::theory {

// Monte-Carlo estimate of eps = E_p[(w - w*)^2] with w = q/p, w* = q*/p,
// next to the closed-form sandwich
//   (sqrt(d2(q||p)) - sqrt(d2(q*||p)))^2 <= eps <= d2(q||p) + d2(q*||p).
struct BoundCheck {
  double epsilon = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t mc_samples = 0;
  double mc_stderr = 0.0;

  // lower - k*stderr <= epsilon <= upper + k*stderr
  bool holds(double sigmas = 3.0) const;
};

inline constexpr std::size_t kMinBoundSamples = 10000;

// Throws DivergenceError (naming the dimension) when either d2 diverges and
// ValidationError when samples < kMinBoundSamples or dimensions differ.
BoundCheck check_bound(const ClassGaussian& p, const ClassGaussian& q, const ClassGaussian& q_star,
                       std::size_t samples, std::uint64_t seed);

// Unbiased Monte-Carlo estimate of E_p[(q/p)^2] with its standard error.
struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};
MonteCarloEstimate monte_carlo_d2(const ClassGaussian& q, const ClassGaussian& p, std::size_t samples,
                                  std::uint64_t seed);

// Points where the 1-D densities p = N(mu_a, s_a^2) and q = N(mu_b, s_b^2)
// cross, for s_a < s_b. q/p < 1 strictly between them and > 1 outside.
struct Crossover {
  double tau1 = 0.0;
  double tau2 = 0.0;
};

// Throws ValidationError unless both are 1-D with var_p < var_q.
Crossover crossover_points(const ClassGaussian& p, const ClassGaussian& q);

// Deterministic self-check used by `verify-theory`.
struct BoundCase {
  std::string id;
  BoundCheck check;
  bool pass = false;
};

struct CrossoverCase {
  std::string id;
  Crossover closed_form;
  double bisection_error = 0.0;  // max |tau_closed - tau_bisect|
  double ratio_error = 0.0;      // max |q/p(tau) - 1|
  bool sign_pattern_ok = false;
  bool pass = false;
};

struct TheoryReport {
  std::vector<BoundCase> bounds;
  std::vector<CrossoverCase> crossovers;

  bool all_pass() const;
};

struct TheorySuiteOptions {
  std::uint64_t seed = 7;
  std::size_t bound_cases = 20;
  std::size_t crossover_cases = 50;
  std::size_t mc_samples = 1000000;
};

TheoryReport run_theory_suite(const TheorySuiteOptions& options);

// Random 1-D parameter draws shared by the suite and the tests: standard
// deviation ratios stay inside the region where the MC estimators have
// finite variance.
struct RandomGaussianTriple {
  ClassGaussian p, q, q_star;
};
RandomGaussianTriple random_convergent_triple(std::uint64_t seed);
std::pair<ClassGaussian, ClassGaussian> random_crossover_pair(std::uint64_t seed);

// Bisection on log q(x) - log p(x) over [lo, hi]; the sign must change.
double bisect_crossing(const ClassGaussian& p, const ClassGaussian& q, double lo, double hi);

}  // namespace tailcal::theory
