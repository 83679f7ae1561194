#include "tailcal/gaussians.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/core.h>

#include "tailcal/error.hpp"

namespace tailcal {

namespace {

void require_same_dim(const ClassGaussian& a, const ClassGaussian& b) {
  if (a.mean.size() != b.mean.size() || a.std.size() != a.mean.size() || b.std.size() != b.mean.size()) {
    throw ValidationError(
        fmt::format("Gaussian dimension mismatch: {} vs {}", a.mean.size(), b.mean.size()));
  }
}

template <typename T>
double log_density_impl(const ClassGaussian& g, std::span<const T> x) {
  if (x.size() != g.dim()) {
    throw ValidationError(fmt::format("point has dimension {}, Gaussian has {}", x.size(), g.dim()));
  }
  constexpr double half_log_2pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)
  double total = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double z = (static_cast<double>(x[d]) - g.mean[d]) / g.std[d];
    total -= half_log_2pi + std::log(g.std[d]) + 0.5 * z * z;
  }
  return total;
}

}  // namespace

ClassStats fit_class_gaussians(const LabeledEmbeddingSet& set) {
  const std::size_t classes = set.num_classes();
  const std::size_t dim = set.feature_dim();
  const auto counts = set.class_counts();
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) {
      throw ValidationError(fmt::format("class {} has no samples; cannot fit its Gaussian", c));
    }
  }

  ClassStats stats(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    stats[c].mean.assign(dim, 0.0);
    stats[c].std.assign(dim, 0.0);
    stats[c].count = counts[c];
  }

  const auto labels = set.labels();
  const MatrixF& features = set.features();
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto& mean = stats[labels[i]].mean;
    const auto row = features.row(i);
    for (std::size_t d = 0; d < dim; ++d) mean[d] += row[d];
  }
  for (auto& g : stats) {
    for (double& m : g.mean) m /= static_cast<double>(g.count);
  }
  // Second pass around the mean to avoid cancellation.
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto& g = stats[labels[i]];
    const auto row = features.row(i);
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = row[d] - g.mean[d];
      g.std[d] += diff * diff;
    }
  }
  for (auto& g : stats) {
    for (double& s : g.std) s = std::max(std::sqrt(s / static_cast<double>(g.count)), kStdFloor);
  }
  return stats;
}

double wasserstein2(const ClassGaussian& a, const ClassGaussian& b) {
  require_same_dim(a, b);
  double total = 0.0;
  for (std::size_t d = 0; d < a.dim(); ++d) {
    const double dm = a.mean[d] - b.mean[d];
    const double ds = a.std[d] - b.std[d];
    total += dm * dm + ds * ds;
  }
  return std::sqrt(total);
}

double log_density(const ClassGaussian& g, std::span<const double> x) {
  return log_density_impl(g, x);
}

double log_density(const ClassGaussian& g, std::span<const float> x) {
  return log_density_impl(g, x);
}

RenyiD2 renyi_d2(const ClassGaussian& q, const ClassGaussian& p) {
  require_same_dim(q, p);
  // Per dimension: int q^2/p dx
  //   = var_p / (s_q * sqrt(2 var_p - var_q)) * exp((mu_q - mu_p)^2 / (2 var_p - var_q)).
  double log_total = 0.0;
  for (std::size_t d = 0; d < q.dim(); ++d) {
    const double var_p = p.std[d] * p.std[d];
    const double var_q = q.std[d] * q.std[d];
    const double denom = 2.0 * var_p - var_q;
    if (!(denom > 0.0)) return RenyiD2{std::nullopt, d};
    const double dm = q.mean[d] - p.mean[d];
    log_total += std::log(var_p) - std::log(q.std[d]) - 0.5 * std::log(denom) + dm * dm / denom;
  }
  return RenyiD2{std::exp(log_total), std::nullopt};
}

nlohmann::json to_json(const ClassStats& stats) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < stats.size(); ++c) {
    classes.push_back({{"class", c}, {"count", stats[c].count}, {"mean", stats[c].mean}, {"std", stats[c].std}});
  }
  return {{"num_classes", stats.size()},
          {"feature_dim", stats.empty() ? 0 : stats.front().dim()},
          {"classes", classes}};
}

ClassStats stats_from_json(const nlohmann::json& doc) {
  try {
    const auto& classes = doc.at("classes");
    ClassStats stats(classes.size());
    for (const auto& entry : classes) {
      const auto c = entry.at("class").get<std::size_t>();
      if (c >= stats.size()) throw ValidationError(fmt::format("class id {} out of range", c));
      ClassGaussian& g = stats[c];
      g.count = entry.at("count").get<std::size_t>();
      g.mean = entry.at("mean").get<std::vector<double>>();
      g.std = entry.at("std").get<std::vector<double>>();
      if (g.mean.size() != g.std.size()) {
        throw ValidationError(fmt::format("class {} has mean/std length mismatch", c));
      }
    }
    return stats;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("malformed class statistics: {}", e.what()));
  }
}

}  // namespace tailcal
