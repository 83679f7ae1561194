#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tailcal/datamodel.hpp"
#include "tailcal/matrix.hpp"

namespace tailcal {

enum class FitMethod { base, plain_ts, weighted_ts };

std::string to_string(FitMethod method);
FitMethod parse_fit_method(const std::string& name);

struct TemperatureBounds {
  double min = 0.05;
  double max = 20.0;
};

inline constexpr std::size_t kGridPoints = 64;
inline constexpr double kTemperatureTolerance = 1e-4;

struct TemperatureFit {
  double temperature = 1.0;
  double objective = 0.0;  // weighted mean NLL at `temperature`
  FitMethod method = FitMethod::plain_ts;
  std::vector<std::pair<double, double>> search_trace;  // (T, objective) for the grid pass
};

// sum_i w_i * CE(softmax(z_i / T), y_i) / sum_i w_i, using a stable
// log-sum-exp. Empty `weights` means all ones.
double weighted_nll(const MatrixF& logits, std::span<const Label> labels, std::span<const double> weights,
                    double temperature);

// 64-point log-spaced grid over the bounds, then golden-section refinement
// on the bracket around the best grid point until it is narrower than 1e-4.
// Deterministic: identical inputs give a bit-identical fit.
TemperatureFit fit_temperature(const MatrixF& logits, std::span<const Label> labels,
                               std::span<const double> weights, TemperatureBounds bounds = {},
                               FitMethod method = FitMethod::weighted_ts);

// Row-wise softmax(z / T).
MatrixD apply_temperature(const MatrixF& logits, double temperature);

nlohmann::json to_json(const TemperatureFit& fit);
TemperatureFit fit_from_json(const nlohmann::json& doc);

}  // namespace tailcal
