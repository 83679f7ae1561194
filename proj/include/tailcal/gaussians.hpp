#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "tailcal/datamodel.hpp"

namespace tailcal {

// Standard-deviation floor applied to every fitted or constructed Gaussian.
inline constexpr double kStdFloor = 1e-6;

// Diagonal-covariance Gaussian N(mean, diag(std^2)) for one class, along with
// the number of samples it was fitted from.
struct ClassGaussian {
  std::vector<double> mean;
  std::vector<double> std;
  std::size_t count = 0;

  std::size_t dim() const noexcept { return mean.size(); }
  bool operator==(const ClassGaussian&) const = default;
};

// Indexed by class id.
using ClassStats = std::vector<ClassGaussian>;

// Per-class mean and population (1/n) standard deviation of the features,
// floored at kStdFloor. Throws ValidationError when a class has no samples.
ClassStats fit_class_gaussians(const LabeledEmbeddingSet& set);

// Closed-form 2-Wasserstein distance between diagonal Gaussians:
// sqrt(|mu_a - mu_b|^2 + |std_a - std_b|^2).
double wasserstein2(const ClassGaussian& a, const ClassGaussian& b);

double log_density(const ClassGaussian& g, std::span<const double> x);
double log_density(const ClassGaussian& g, std::span<const float> x);

// d2(q||p) = E_p[(q/p)^2], the exponentiated order-2 Renyi divergence.
// Each dimension contributes a closed-form factor; the integral diverges as
// soon as one dimension has 2*var_p <= var_q.
struct RenyiD2 {
  std::optional<double> value;                    // empty when divergent
  std::optional<std::size_t> divergent_dimension;  // first offending dimension

  bool convergent() const noexcept { return value.has_value(); }
};

RenyiD2 renyi_d2(const ClassGaussian& q, const ClassGaussian& p);

nlohmann::json to_json(const ClassStats& stats);
ClassStats stats_from_json(const nlohmann::json& doc);

}  // namespace tailcal
