#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailcal/datamodel.hpp"
#include "tailcal/matrix.hpp"

namespace tailcal {

inline constexpr std::size_t kDefaultBins = 15;
inline constexpr std::size_t kDefaultRanges = 15;

enum class BinScheme { equal_width, equal_mass };

BinScheme parse_bin_scheme(const std::string& name);
std::string to_string(BinScheme scheme);

struct Confidences {
  std::vector<double> confidence;  // row max
  std::vector<Label> prediction;   // row argmax, lowest index on ties
};

// Throws ValidationError when a row does not sum to 1 within 1e-4.
Confidences confidences(const MatrixD& probs);

// Reliability-diagram table over top-label confidence. Equal-width bins are
// (left, right] with a confidence of exactly 0 placed in the first bin.
// Empty bins have count 0 and confidence = accuracy = 0.
struct BinStats {
  BinScheme scheme = BinScheme::equal_width;
  std::vector<double> edges;
  std::vector<std::size_t> count;
  std::vector<double> confidence;
  std::vector<double> accuracy;

  std::size_t total() const;
  // sum_b (count_b / N) * |accuracy_b - confidence_b|
  double expected_gap() const;
};

BinStats reliability_table(const MatrixD& probs, std::span<const Label> labels,
                           std::size_t bins = kDefaultBins, BinScheme scheme = BinScheme::equal_width);

// Equal-width expected calibration error.
double ece(const MatrixD& probs, std::span<const Label> labels, std::size_t bins = kDefaultBins);

// Static (classwise) calibration error: every class column binned on its own,
// averaged over classes.
double sce(const MatrixD& probs, std::span<const Label> labels, std::size_t bins = kDefaultBins);

// Adaptive calibration error: per class, equal-count ranges of the sorted
// class probabilities; unweighted mean gap over classes x ranges.
// Throws ValidationError when there are fewer samples than ranges.
double ace(const MatrixD& probs, std::span<const Label> labels, std::size_t ranges = kDefaultRanges);

double accuracy(const MatrixD& probs, std::span<const Label> labels);

struct MetricReport {
  double ece = 0.0;
  double sce = 0.0;
  double ace = 0.0;
  double accuracy = 0.0;
  std::size_t n = 0;
  std::size_t bins = kDefaultBins;
};

MetricReport evaluate_metrics(const MatrixD& probs, std::span<const Label> labels,
                              std::size_t bins = kDefaultBins, std::size_t ranges = kDefaultRanges);

nlohmann::json to_json(const MetricReport& report);
nlohmann::json to_json(const BinStats& table);
std::string to_csv(const BinStats& table);

}  // namespace tailcal
