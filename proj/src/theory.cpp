#include "tailcal/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/core.h>

#include "tailcal/error.hpp"
#include "tailcal/parallel.hpp"

namespace tailcal::theory {

namespace {

constexpr std::size_t kShardSize = 1 << 16;

std::mt19937_64 shard_engine(std::uint64_t seed, std::size_t shard) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(shard), static_cast<std::uint32_t>(shard >> 32)};
  return std::mt19937_64(seq);
}

// Running mean / sum of squared deviations, merged pairwise (Chan et al.).
struct Moments {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    n += 1.0;
    const double delta = x - mean;
    mean += delta / n;
    m2 += delta * (x - mean);
  }

  void merge(const Moments& o) {
    if (o.n == 0.0) return;
    const double total = n + o.n;
    const double delta = o.mean - mean;
    mean += delta * o.n / total;
    m2 += o.m2 + delta * delta * n * o.n / total;
    n = total;
  }

  double standard_error() const { return n > 1.0 ? std::sqrt(m2 / (n - 1.0) / n) : 0.0; }
};

// Draws `samples` points from p in deterministic shards and averages f(x).
template <typename F>
Moments sample_under(const ClassGaussian& p, std::size_t samples, std::uint64_t seed, F&& f) {
  const std::size_t shards = (samples + kShardSize - 1) / kShardSize;
  std::vector<Moments> partial(shards);
  parallel_for(shards, [&](std::size_t s) {
    auto rng = shard_engine(seed, s);
    std::normal_distribution<double> standard(0.0, 1.0);
    std::vector<double> x(p.dim());
    const std::size_t begin = s * kShardSize;
    const std::size_t end = std::min(samples, begin + kShardSize);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t d = 0; d < x.size(); ++d) x[d] = p.mean[d] + p.std[d] * standard(rng);
      partial[s].add(f(std::span<const double>(x)));
    }
  });
  Moments total;
  for (const auto& m : partial) total.merge(m);
  return total;
}

double require_convergent(const ClassGaussian& q, const ClassGaussian& p, const char* name) {
  const RenyiD2 d2 = renyi_d2(q, p);
  if (!d2.convergent()) {
    const std::size_t d = *d2.divergent_dimension;
    throw DivergenceError(
        fmt::format("d2({}||p) diverges in dimension {}: var_{} = {} >= 2 * var_p = {}", name, d, name,
                    q.std[d] * q.std[d], 2.0 * p.std[d] * p.std[d]),
        d);
  }
  return *d2.value;
}

ClassGaussian gaussian_1d(double mean, double std) { return ClassGaussian{{mean}, {std}, 0}; }

double log_ratio_1d(const ClassGaussian& p, const ClassGaussian& q, double x) {
  const double point[1] = {x};
  return log_density(q, std::span<const double>(point)) - log_density(p, std::span<const double>(point));
}

}  // namespace

bool BoundCheck::holds(double sigmas) const {
  return epsilon >= lower - sigmas * mc_stderr && epsilon <= upper + sigmas * mc_stderr;
}

BoundCheck check_bound(const ClassGaussian& p, const ClassGaussian& q, const ClassGaussian& q_star,
                       std::size_t samples, std::uint64_t seed) {
  if (samples < kMinBoundSamples) {
    throw ValidationError(fmt::format("bound check needs at least {} samples, got {}", kMinBoundSamples, samples));
  }
  if (q.dim() != p.dim() || q_star.dim() != p.dim()) {
    throw ValidationError("bound check needs Gaussians of equal dimension");
  }
  const double d2_q = require_convergent(q, p, "q");
  const double d2_star = require_convergent(q_star, p, "q*");

  const Moments eps = sample_under(p, samples, seed, [&](std::span<const double> x) {
    const double lp = log_density(p, x);
    const double w = std::exp(log_density(q, x) - lp);
    const double w_star = std::exp(log_density(q_star, x) - lp);
    return (w - w_star) * (w - w_star);
  });

  BoundCheck out;
  out.epsilon = eps.mean;
  out.mc_stderr = eps.standard_error();
  out.mc_samples = samples;
  const double gap = std::sqrt(d2_q) - std::sqrt(d2_star);
  out.lower = gap * gap;
  out.upper = d2_q + d2_star;
  return out;
}

MonteCarloEstimate monte_carlo_d2(const ClassGaussian& q, const ClassGaussian& p, std::size_t samples,
                                  std::uint64_t seed) {
  if (samples < 2) throw ValidationError("Monte-Carlo estimate needs at least 2 samples");
  const Moments m = sample_under(p, samples, seed, [&](std::span<const double> x) {
    const double w = std::exp(log_density(q, x) - log_density(p, x));
    return w * w;
  });
  return {m.mean, m.standard_error()};
}

Crossover crossover_points(const ClassGaussian& p, const ClassGaussian& q) {
  if (p.dim() != 1 || q.dim() != 1) throw ValidationError("crossover points are defined for 1-D Gaussians");
  const double mu_a = p.mean[0], s_a = p.std[0];
  const double mu_b = q.mean[0], s_b = q.std[0];
  const double var_a = s_a * s_a, var_b = s_b * s_b;
  if (!(var_a < var_b)) {
    throw ValidationError(fmt::format("crossover needs var_p < var_q, got {} >= {}", var_a, var_b));
  }
  const double dm = mu_a - mu_b;
  const double delta = std::sqrt(dm * dm + (var_b - var_a) * (std::log(var_b) - std::log(var_a)));
  const double centre = mu_a * var_b - mu_b * var_a;
  const double spread = s_a * s_b * delta;
  return {(centre - spread) / (var_b - var_a), (centre + spread) / (var_b - var_a)};
}

double bisect_crossing(const ClassGaussian& p, const ClassGaussian& q, double lo, double hi) {
  double f_lo = log_ratio_1d(p, q, lo);
  const double f_hi = log_ratio_1d(p, q, hi);
  if ((f_lo > 0.0) == (f_hi > 0.0)) {
    throw ValidationError(fmt::format("no sign change of log(q/p) on [{}, {}]", lo, hi));
  }
  for (int iter = 0; iter < 200 && hi - lo > 0.0; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f_mid = log_ratio_1d(p, q, mid);
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

RandomGaussianTriple random_convergent_triple(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto between = [&](double a, double b) { return a + (b - a) * u(rng); };
  const double mu_p = between(-1.0, 1.0);
  const double s_p = between(0.5, 2.0);
  RandomGaussianTriple t;
  t.p = gaussian_1d(mu_p, s_p);
  t.q = gaussian_1d(mu_p + s_p * between(-0.75, 0.75), s_p * between(0.7, 1.1));
  t.q_star = gaussian_1d(mu_p + s_p * between(-0.75, 0.75), s_p * between(0.7, 1.1));
  return t;
}

std::pair<ClassGaussian, ClassGaussian> random_crossover_pair(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto between = [&](double a, double b) { return a + (b - a) * u(rng); };
  const double mu_a = between(-2.0, 2.0);
  const double s_a = between(0.5, 2.0);
  double shift = between(-2.0, 2.0);
  if (std::abs(shift) < 1e-3) shift = 1e-3;
  return {gaussian_1d(mu_a, s_a), gaussian_1d(mu_a + shift, s_a * between(1.2, 3.0))};
}

bool TheoryReport::all_pass() const {
  return std::all_of(bounds.begin(), bounds.end(), [](const auto& c) { return c.pass; }) &&
         std::all_of(crossovers.begin(), crossovers.end(), [](const auto& c) { return c.pass; });
}

TheoryReport run_theory_suite(const TheorySuiteOptions& options) {
  TheoryReport report;
  const std::size_t samples = std::max(options.mc_samples, kMinBoundSamples);

  {
    // q = q*: both bounds' lower end and the estimate are exactly zero.
    const auto t = random_convergent_triple(options.seed);
    BoundCase c{"identical-estimate", check_bound(t.p, t.q, t.q, samples, options.seed), false};
    c.pass = c.check.epsilon == 0.0 && c.check.lower == 0.0 && c.check.holds();
    report.bounds.push_back(c);
  }
  {
    // q* = p: w* = 1, so eps = d2(q||p) - 1.
    const auto t = random_convergent_triple(options.seed + 1);
    BoundCase c{"estimate-equals-source", check_bound(t.p, t.q, t.p, samples, options.seed + 1), false};
    const double expected = *renyi_d2(t.q, t.p).value - 1.0;
    c.pass = c.check.holds() && std::abs(c.check.epsilon - expected) <= 3.0 * c.check.mc_stderr + 1e-12;
    report.bounds.push_back(c);
  }
  for (std::size_t k = 0; k < options.bound_cases; ++k) {
    const std::uint64_t s = options.seed * 1000 + 100 + k;
    const auto t = random_convergent_triple(s);
    BoundCase c{fmt::format("random-{}", k), check_bound(t.p, t.q, t.q_star, samples, s), false};
    c.pass = c.check.holds();
    report.bounds.push_back(c);
  }

  for (std::size_t k = 0; k < options.crossover_cases; ++k) {
    const auto [p, q] = random_crossover_pair(options.seed * 1000 + 500 + k);
    CrossoverCase c;
    c.id = fmt::format("crossover-{}", k);
    c.closed_form = crossover_points(p, q);
    const double mid = 0.5 * (c.closed_form.tau1 + c.closed_form.tau2);
    const double reach = 20.0 * q.std[0] + std::abs(mid - q.mean[0]) + std::abs(mid - p.mean[0]);
    const double t1 = bisect_crossing(p, q, mid - reach, mid);
    const double t2 = bisect_crossing(p, q, mid, mid + reach);
    c.bisection_error = std::max(std::abs(t1 - c.closed_form.tau1), std::abs(t2 - c.closed_form.tau2));
    c.ratio_error = std::max(std::abs(std::exp(log_ratio_1d(p, q, c.closed_form.tau1)) - 1.0),
                             std::abs(std::exp(log_ratio_1d(p, q, c.closed_form.tau2)) - 1.0));
    c.sign_pattern_ok = true;
    constexpr std::size_t grid = 1000;
    const double lo = q.mean[0] - 6.0 * q.std[0];
    const double hi = q.mean[0] + 6.0 * q.std[0];
    for (std::size_t i = 0; i < grid; ++i) {
      const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid - 1);
      if (std::abs(x - c.closed_form.tau1) < 1e-9 || std::abs(x - c.closed_form.tau2) < 1e-9) continue;
      const bool inside = x > c.closed_form.tau1 && x < c.closed_form.tau2;
      const double g = log_ratio_1d(p, q, x);
      if (inside ? !(g < 0.0) : !(g > 0.0)) c.sign_pattern_ok = false;
    }
    c.pass = c.bisection_error < 1e-8 && c.ratio_error < 1e-9 && c.sign_pattern_ok;
    report.crossovers.push_back(c);
  }
  return report;
}

}  // namespace tailcal::theory
