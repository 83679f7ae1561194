#include "tailcal/calibrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "tailcal/error.hpp"
#include "tailcal/parallel.hpp"

namespace tailcal {

namespace {

constexpr std::size_t kChunk = 2048;

void require_positive_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError(fmt::format("temperature must be positive and finite, got {}", temperature));
  }
}

double row_cross_entropy(std::span<const float> z, std::size_t label, double inv_t) {
  double peak = -std::numeric_limits<double>::infinity();
  for (float v : z) peak = std::max(peak, static_cast<double>(v) * inv_t);
  double sum = 0.0;
  for (float v : z) sum += std::exp(static_cast<double>(v) * inv_t - peak);
  return peak + std::log(sum) - static_cast<double>(z[label]) * inv_t;
}

}  // namespace

std::string to_string(FitMethod method) {
  switch (method) {
    case FitMethod::base: return "base";
    case FitMethod::plain_ts: return "plain_ts";
    case FitMethod::weighted_ts: return "weighted_ts";
  }
  return "base";
}

FitMethod parse_fit_method(const std::string& name) {
  if (name == "base") return FitMethod::base;
  if (name == "plain_ts") return FitMethod::plain_ts;
  if (name == "weighted_ts") return FitMethod::weighted_ts;
  throw ValidationError(fmt::format("unknown fit method '{}'", name));
}

double weighted_nll(const MatrixF& logits, std::span<const Label> labels, std::span<const double> weights,
                    double temperature) {
  require_positive_temperature(temperature);
  if (labels.size() != logits.rows()) {
    throw ValidationError(fmt::format("{} labels for {} logit rows", labels.size(), logits.rows()));
  }
  if (!weights.empty() && weights.size() != labels.size()) {
    throw ValidationError(fmt::format("{} weights for {} samples", weights.size(), labels.size()));
  }
  if (labels.empty()) throw ValidationError("weighted_nll needs at least one sample");

  const double inv_t = 1.0 / temperature;
  const std::size_t n = labels.size();
  const double loss = chunked_sum(n, kChunk, [&](std::size_t begin, std::size_t end) {
    double partial = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double w = weights.empty() ? 1.0 : weights[i];
      partial += w * row_cross_entropy(logits.row(i), labels[i], inv_t);
    }
    return partial;
  });
  double total_weight = static_cast<double>(n);
  if (!weights.empty()) {
    total_weight = 0.0;
    for (double w : weights) total_weight += w;
  }
  if (!(total_weight > 0.0)) throw ValidationError("weights must sum to a positive value");
  return loss / total_weight;
}

TemperatureFit fit_temperature(const MatrixF& logits, std::span<const Label> labels,
                               std::span<const double> weights, TemperatureBounds bounds, FitMethod method) {
  if (!(bounds.min > 0.0 && bounds.min < bounds.max) || !std::isfinite(bounds.max)) {
    throw ValidationError(fmt::format("invalid temperature bounds [{}, {}]", bounds.min, bounds.max));
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw ValidationError(fmt::format("weight {} at row {} is not positive", weights[i], i));
    }
  }
  auto objective = [&](double t) { return weighted_nll(logits, labels, weights, t); };

  TemperatureFit fit;
  fit.method = method;
  fit.search_trace.reserve(kGridPoints);
  const double log_lo = std::log(bounds.min);
  const double log_step = (std::log(bounds.max) - log_lo) / static_cast<double>(kGridPoints - 1);
  std::vector<double> grid(kGridPoints);
  for (std::size_t i = 0; i < kGridPoints; ++i) {
    grid[i] = std::exp(log_lo + log_step * static_cast<double>(i));
  }
  grid.front() = bounds.min;
  grid.back() = bounds.max;

  std::size_t best = 0;
  for (std::size_t i = 0; i < kGridPoints; ++i) {
    fit.search_trace.emplace_back(grid[i], objective(grid[i]));
    if (fit.search_trace[i].second < fit.search_trace[best].second) best = i;
  }

  double best_t = grid[best];
  double best_value = fit.search_trace[best].second;
  auto consider = [&](double t, double value) {
    if (value < best_value) {
      best_t = t;
      best_value = value;
    }
  };

  // The objective is convex in 1/T, hence unimodal in T on the bracket.
  double a = grid[best == 0 ? 0 : best - 1];
  double b = grid[std::min(best + 1, kGridPoints - 1)];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = objective(c);
  double fd = objective(d);
  while (b - a >= kTemperatureTolerance) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = objective(d);
    }
  }
  consider(c, fc);
  consider(d, fd);
  const double mid = 0.5 * (a + b);
  consider(mid, objective(mid));

  fit.temperature = best_t;
  fit.objective = best_value;
  return fit;
}

MatrixD apply_temperature(const MatrixF& logits, double temperature) {
  require_positive_temperature(temperature);
  const double inv_t = 1.0 / temperature;
  MatrixD probs(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    auto p = probs.row(i);
    double peak = -std::numeric_limits<double>::infinity();
    for (float v : z) peak = std::max(peak, static_cast<double>(v) * inv_t);
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      p[c] = std::exp(static_cast<double>(z[c]) * inv_t - peak);
      sum += p[c];
    }
    for (double& v : p) v /= sum;
  }
  return probs;
}

nlohmann::json to_json(const TemperatureFit& fit) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& [t, value] : fit.search_trace) trace.push_back({t, value});
  return {{"temperature", fit.temperature},
          {"objective", fit.objective},
          {"method", to_string(fit.method)},
          {"search_trace", trace}};
}

TemperatureFit fit_from_json(const nlohmann::json& doc) {
  try {
    TemperatureFit fit;
    fit.temperature = doc.at("temperature").get<double>();
    fit.objective = doc.at("objective").get<double>();
    fit.method = parse_fit_method(doc.at("method").get<std::string>());
    for (const auto& entry : doc.at("search_trace")) {
      fit.search_trace.emplace_back(entry.at(0).get<double>(), entry.at(1).get<double>());
    }
    require_positive_temperature(fit.temperature);
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("malformed temperature fit: {}", e.what()));
  }
}

}  // namespace tailcal
