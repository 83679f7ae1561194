#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "tailcal/error.hpp"
#include "tailcal/gaussians.hpp"

using namespace tailcal;
using testing::gaussian;
using testing::gaussian1;
using testing::matrix;

namespace {

ClassGaussian random_gaussian(std::mt19937_64& rng, std::size_t dim) {
  std::uniform_real_distribution<double> mean(-3.0, 3.0), std(0.1, 3.0);
  ClassGaussian g;
  for (std::size_t d = 0; d < dim; ++d) {
    g.mean.push_back(mean(rng));
    g.std.push_back(std(rng));
  }
  return g;
}

}  // namespace

TEST_CASE("fit uses population moments") {
  LabeledEmbeddingSet set(matrix(5, 2, {0, 0, 2, 0, 0, 2, 2, 2, 7, 7}), matrix(5, 2, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0}),
                          {0, 0, 0, 0, 1});
  const auto stats = fit_class_gaussians(set);
  REQUIRE(stats.size() == 2);
  CHECK(stats[0].mean == std::vector<double>{1.0, 1.0});
  CHECK(stats[0].std == std::vector<double>{1.0, 1.0});
  CHECK(stats[0].count == 4);
  // A single sample has zero spread and sits on the floor.
  CHECK(stats[1].mean == std::vector<double>{7.0, 7.0});
  CHECK(stats[1].std == std::vector<double>{kStdFloor, kStdFloor});
  CHECK(stats[1].count == 1);
}

TEST_CASE("fit floors a repeated point") {
  LabeledEmbeddingSet set(matrix(3, 2, {3, 3, 3, 3, 3, 3}), matrix(3, 2, {0, 0, 0, 0, 0, 0}), {0, 0, 1});
  const auto stats = fit_class_gaussians(set);
  CHECK(stats[0].mean == std::vector<double>{3.0, 3.0});
  CHECK(stats[0].std == std::vector<double>{kStdFloor, kStdFloor});
}

TEST_CASE("fit refuses a class without samples") {
  LabeledEmbeddingSet set(matrix(2, 1, {0, 1}), matrix(2, 3, {0, 0, 0, 0, 0, 0}), {0, 0});
  CHECK_THROWS_WITH_AS(fit_class_gaussians(set), doctest::Contains("class 1"), ValidationError);
}

TEST_CASE("wasserstein2 examples against the quantile coupling") {
  CHECK(wasserstein2(gaussian1(0, 1), gaussian1(0, 1)) == 0.0);
  CHECK(wasserstein2(gaussian1(0, 1), gaussian1(3, 1)) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(wasserstein2(gaussian1(0, 1), gaussian1(0, 2)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(oracle::w2_quantile_coupling(0, 1, 3, 1) == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(oracle::w2_quantile_coupling(0, 1, 0, 2) == doctest::Approx(1.0).epsilon(1e-8));

  std::mt19937_64 rng(21);
  for (int i = 0; i < 25; ++i) {
    const auto a = random_gaussian(rng, 1);
    const auto b = random_gaussian(rng, 1);
    const double closed = wasserstein2(a, b);
    const double numeric = oracle::w2_quantile_coupling(a.mean[0], a.std[0], b.mean[0], b.std[0]);
    CHECK(std::abs(closed - numeric) / numeric < 1e-6);
  }
}

TEST_CASE("wasserstein2 satisfies the metric axioms") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t dim = 1 + trial % 6;
    const auto a = random_gaussian(rng, dim);
    const auto b = random_gaussian(rng, dim);
    const auto c = random_gaussian(rng, dim);
    const double ab = wasserstein2(a, b);
    CHECK(ab > 0.0);
    CHECK(ab == wasserstein2(b, a));
    CHECK(wasserstein2(a, a) == 0.0);
    CHECK(ab <= wasserstein2(a, c) + wasserstein2(c, b) + 1e-9);
  }
  CHECK_THROWS_AS(wasserstein2(gaussian1(0, 1), gaussian({0, 0}, {1, 1})), ValidationError);
}

TEST_CASE("log_density examples") {
  const double expected = -0.5 * std::log(2.0 * std::numbers::pi);
  const std::vector<double> zero{0.0};
  CHECK(log_density(gaussian1(0, 1), zero) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(log_density(gaussian1(0, 1), zero) == doctest::Approx(-0.918939).epsilon(1e-6));

  const auto g = gaussian({0.5, -1.0}, {0.7, 2.0});
  const std::vector<double> x{1.3, 0.4};
  const double sum = oracle::normal_log_pdf(1.3, 0.5, 0.7) + oracle::normal_log_pdf(0.4, -1.0, 2.0);
  CHECK(log_density(g, x) == doctest::Approx(sum).epsilon(1e-14));

  const std::vector<float> xf{1.3f, 0.4f};
  const double sum_f = oracle::normal_log_pdf(1.3f, 0.5, 0.7) + oracle::normal_log_pdf(0.4f, -1.0, 2.0);
  CHECK(log_density(g, xf) == doctest::Approx(sum_f).epsilon(1e-14));

  const std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(log_density(g, wrong), ValidationError);
}

TEST_CASE("log_density peaks at the mean") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> step(0.0, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_gaussian(rng, 3);
    const double peak = log_density(g, g.mean);
    auto x = g.mean;
    for (auto& v : x) v += step(rng);
    CHECK(log_density(g, x) < peak);
  }
}

TEST_CASE("density integrates to one in 1-D") {
  for (const auto& [mu, sigma] : {std::pair{0.0, 1.0}, std::pair{2.5, 0.3}, std::pair{-1.0, 4.0}}) {
    const auto g = gaussian1(mu, sigma);
    const double lo = mu - 14.0 * sigma, hi = mu + 14.0 * sigma;
    const int n = 200000;
    const double h = (hi - lo) / n;
    double total = 0.0;
    for (int i = 0; i <= n; ++i) {
      const std::vector<double> x{lo + i * h};
      const double v = std::exp(log_density(g, x));
      total += (i == 0 || i == n) ? 0.5 * v : v;
    }
    CHECK(std::abs(total * h - 1.0) < 1e-6);
  }
}

TEST_CASE("renyi_d2 examples") {
  const auto same = renyi_d2(gaussian1(0.3, 1.7), gaussian1(0.3, 1.7));
  REQUIRE(same.convergent());
  CHECK(*same.value == doctest::Approx(1.0).epsilon(1e-15));

  const auto shifted = renyi_d2(gaussian1(1, 1), gaussian1(0, 1));
  REQUIRE(shifted.convergent());
  CHECK(*shifted.value == doctest::Approx(std::exp(1.0)).epsilon(1e-14));
  const auto mc = oracle::d2_monte_carlo(1, 1, 0, 1, 1000000, 17);
  CHECK(std::abs(mc.mean - *shifted.value) / *shifted.value < 0.02);

  const auto wide = renyi_d2(gaussian1(0, 3), gaussian1(0, 1));
  CHECK_FALSE(wide.convergent());
  CHECK(wide.divergent_dimension == 0u);
}

TEST_CASE("renyi_d2 divergence estimates keep growing") {
  // For q = N(0, 3^2) and p = N(0, 1) the mean of (q/p)^2 is infinite and
  // the typical sample mean grows like n^(7/9); compare medians over seeds.
  auto median_estimate = [](std::size_t n) {
    std::vector<double> estimates;
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
      estimates.push_back(oracle::d2_monte_carlo(0, 3, 0, 1, n, seed).mean);
    }
    std::ranges::nth_element(estimates, estimates.begin() + 7);
    return estimates[7];
  };
  const double small = median_estimate(1000);
  const double large = median_estimate(100000);
  CHECK(large > 5.0 * small);
}

TEST_CASE("renyi_d2 names the first divergent dimension") {
  const auto q = gaussian({0, 0, 0}, {1, 1.5, 5});
  const auto p = gaussian({0, 0, 0}, {1, 1, 1});
  const auto r = renyi_d2(q, p);
  CHECK_FALSE(r.convergent());
  CHECK(r.divergent_dimension == 1u);
  // Exactly on the boundary 2 var_p = var_q is divergent too.
  const auto edge = renyi_d2(gaussian1(0, std::sqrt(2.0)), gaussian1(0, 1));
  CHECK_FALSE(edge.convergent());
}

TEST_CASE("renyi_d2 matches quadrature and is at least one") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> mean(-1.5, 1.5), ratio(0.4, 1.35), base(0.3, 2.5);
  for (int trial = 0; trial < 100; ++trial) {
    const double sp = base(rng);
    const auto p = gaussian1(mean(rng), sp);
    const auto q = gaussian1(mean(rng), sp * ratio(rng));
    const auto r = renyi_d2(q, p);
    REQUIRE(r.convergent());
    CHECK(*r.value >= 1.0);
    const double numeric = oracle::d2_quadrature(q.mean[0], q.std[0], p.mean[0], p.std[0]);
    CHECK(std::abs(*r.value - numeric) / numeric < 1e-8);
  }
  // Diagonal factorisation: the D-dim value is the product over dimensions.
  const auto q = gaussian({0.2, -0.4}, {0.9, 1.2});
  const auto p = gaussian({0.0, 0.1}, {1.0, 1.1});
  const double product = oracle::d2_quadrature(0.2, 0.9, 0.0, 1.0) * oracle::d2_quadrature(-0.4, 1.2, 0.1, 1.1);
  CHECK(*renyi_d2(q, p).value == doctest::Approx(product).epsilon(1e-8));
}

TEST_CASE("class statistics round-trip through JSON exactly") {
  std::mt19937_64 rng(4);
  ClassStats stats;
  for (std::size_t c = 0; c < 5; ++c) {
    auto g = random_gaussian(rng, 7);
    g.count = 10 * c + 1;
    stats.push_back(g);
  }
  const auto doc = to_json(stats);
  CHECK(doc.at("num_classes") == 5);
  CHECK(doc.at("feature_dim") == 7);
  CHECK(stats_from_json(nlohmann::json::parse(doc.dump())) == stats);
  CHECK_THROWS_AS(stats_from_json(nlohmann::json::parse(R"({"classes": 3})")), ValidationError);
}
