#include "tailcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "tailcal/error.hpp"

namespace tailcal {

namespace {

void require_rows(const MatrixD& probs, std::span<const Label> labels) {
  if (probs.rows() != labels.size()) {
    throw ValidationError(fmt::format("{} probability rows for {} labels", probs.rows(), labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= probs.cols()) {
      throw ValidationError(fmt::format("label row {} has value {} outside [0, {})", i, labels[i], probs.cols()));
    }
  }
}

std::vector<double> uniform_edges(std::size_t bins) {
  std::vector<double> edges(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) edges[b] = static_cast<double>(b) / static_cast<double>(bins);
  return edges;
}

// Bin b covers (edges[b], edges[b+1]]; anything at or below edges[1] lands in bin 0.
std::size_t width_bin(double v, std::span<const double> edges) {
  const std::size_t bins = edges.size() - 1;
  const double guess = std::ceil(v * static_cast<double>(bins)) - 1.0;
  std::size_t b = guess <= 0.0 ? 0 : std::min(bins - 1, static_cast<std::size_t>(guess));
  while (b > 0 && v <= edges[b]) --b;
  while (b + 1 < bins && v > edges[b + 1]) ++b;
  return b;
}

// Splits n sorted items into `ranges` consecutive groups whose sizes differ
// by at most one, larger groups first. Returns group start offsets (ranges + 1).
std::vector<std::size_t> equal_mass_offsets(std::size_t n, std::size_t ranges) {
  std::vector<std::size_t> offsets(ranges + 1, 0);
  const std::size_t base = n / ranges;
  const std::size_t extra = n % ranges;
  for (std::size_t r = 0; r < ranges; ++r) offsets[r + 1] = offsets[r] + base + (r < extra ? 1 : 0);
  return offsets;
}

struct GapAccumulator {
  std::vector<std::size_t> count;
  std::vector<double> conf_sum;
  std::vector<double> hit_sum;

  explicit GapAccumulator(std::size_t bins) : count(bins, 0), conf_sum(bins, 0.0), hit_sum(bins, 0.0) {}

  void add(std::size_t b, double conf, bool hit) {
    ++count[b];
    conf_sum[b] += conf;
    hit_sum[b] += hit ? 1.0 : 0.0;
  }

  double weighted_gap(double n) const {
    double total = 0.0;
    for (std::size_t b = 0; b < count.size(); ++b) {
      if (count[b] == 0) continue;
      const double k = static_cast<double>(count[b]);
      total += (k / n) * std::abs(hit_sum[b] / k - conf_sum[b] / k);
    }
    return total;
  }
};

}  // namespace

BinScheme parse_bin_scheme(const std::string& name) {
  if (name == "equal_width") return BinScheme::equal_width;
  if (name == "equal_mass") return BinScheme::equal_mass;
  throw ValidationError(fmt::format("unknown bin scheme '{}' (expected equal_width or equal_mass)", name));
}

std::string to_string(BinScheme scheme) {
  return scheme == BinScheme::equal_width ? "equal_width" : "equal_mass";
}

Confidences confidences(const MatrixD& probs) {
  Confidences out;
  out.confidence.resize(probs.rows());
  out.prediction.resize(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    if (!(std::abs(sum - 1.0) <= 1e-4)) {
      throw ValidationError(fmt::format("probability row {} sums to {}, not 1", i, sum));
    }
    const auto top = std::max_element(row.begin(), row.end());
    out.confidence[i] = *top;
    out.prediction[i] = static_cast<Label>(top - row.begin());
  }
  return out;
}

std::size_t BinStats::total() const { return std::accumulate(count.begin(), count.end(), std::size_t{0}); }

double BinStats::expected_gap() const {
  const double n = static_cast<double>(total());
  if (n == 0.0) return 0.0;
  double gap = 0.0;
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] == 0) continue;
    gap += (static_cast<double>(count[b]) / n) * std::abs(accuracy[b] - confidence[b]);
  }
  return gap;
}

BinStats reliability_table(const MatrixD& probs, std::span<const Label> labels, std::size_t bins,
                           BinScheme scheme) {
  if (bins == 0) throw ValidationError("need at least one bin");
  require_rows(probs, labels);
  const Confidences top = confidences(probs);
  const std::size_t n = labels.size();

  BinStats table;
  table.scheme = scheme;
  GapAccumulator acc(bins);

  if (scheme == BinScheme::equal_width) {
    table.edges = uniform_edges(bins);
    for (std::size_t i = 0; i < n; ++i) {
      acc.add(width_bin(top.confidence[i], table.edges), top.confidence[i], top.prediction[i] == labels[i]);
    }
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return top.confidence[a] < top.confidence[b]; });
    const auto offsets = equal_mass_offsets(n, bins);
    table.edges.assign(bins + 1, 0.0);
    for (std::size_t b = 0; b < bins; ++b) {
      for (std::size_t k = offsets[b]; k < offsets[b + 1]; ++k) {
        const std::size_t i = order[k];
        acc.add(b, top.confidence[i], top.prediction[i] == labels[i]);
      }
      const bool filled = offsets[b + 1] > offsets[b];
      table.edges[b + 1] = filled ? top.confidence[order[offsets[b + 1] - 1]] : table.edges[b];
    }
    table.edges.back() = 1.0;
  }

  table.count = acc.count;
  table.confidence.assign(bins, 0.0);
  table.accuracy.assign(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    if (acc.count[b] == 0) continue;
    const double k = static_cast<double>(acc.count[b]);
    table.confidence[b] = acc.conf_sum[b] / k;
    table.accuracy[b] = acc.hit_sum[b] / k;
  }
  return table;
}

double ece(const MatrixD& probs, std::span<const Label> labels, std::size_t bins) {
  return reliability_table(probs, labels, bins, BinScheme::equal_width).expected_gap();
}

double sce(const MatrixD& probs, std::span<const Label> labels, std::size_t bins) {
  if (bins == 0) throw ValidationError("need at least one bin");
  require_rows(probs, labels);
  const auto edges = uniform_edges(bins);
  const std::size_t classes = probs.cols();
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    GapAccumulator acc(bins);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double p = probs(i, c);
      acc.add(width_bin(p, edges), p, labels[i] == c);
    }
    total += acc.weighted_gap(n);
  }
  return total / static_cast<double>(classes);
}

double ace(const MatrixD& probs, std::span<const Label> labels, std::size_t ranges) {
  if (ranges == 0) throw ValidationError("need at least one range");
  require_rows(probs, labels);
  const std::size_t n = labels.size();
  if (n < ranges) {
    throw ValidationError(fmt::format("ACE with {} ranges needs at least {} samples, got {}", ranges, ranges, n));
  }
  const std::size_t classes = probs.cols();
  const auto offsets = equal_mass_offsets(n, ranges);
  std::vector<std::size_t> order(n);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return probs(a, c) < probs(b, c); });
    for (std::size_t r = 0; r < ranges; ++r) {
      double conf = 0.0;
      double hits = 0.0;
      for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
        conf += probs(order[k], c);
        hits += labels[order[k]] == c ? 1.0 : 0.0;
      }
      const double size = static_cast<double>(offsets[r + 1] - offsets[r]);
      total += std::abs(hits / size - conf / size);
    }
  }
  return total / static_cast<double>(classes * ranges);
}

double accuracy(const MatrixD& probs, std::span<const Label> labels) {
  require_rows(probs, labels);
  if (labels.empty()) return 0.0;
  const Confidences top = confidences(probs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += top.prediction[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

MetricReport evaluate_metrics(const MatrixD& probs, std::span<const Label> labels, std::size_t bins,
                              std::size_t ranges) {
  MetricReport report;
  report.ece = ece(probs, labels, bins);
  report.sce = sce(probs, labels, bins);
  report.ace = ace(probs, labels, ranges);
  report.accuracy = accuracy(probs, labels);
  report.n = labels.size();
  report.bins = bins;
  return report;
}

nlohmann::json to_json(const MetricReport& report) {
  return {{"ece", report.ece}, {"sce", report.sce},   {"ace", report.ace},
          {"accuracy", report.accuracy}, {"n", report.n}, {"bins", report.bins}};
}

nlohmann::json to_json(const BinStats& table) {
  return {{"scheme", to_string(table.scheme)}, {"edges", table.edges},
          {"count", table.count},             {"confidence", table.confidence},
          {"accuracy", table.accuracy},       {"ece", table.expected_gap()}};
}

std::string to_csv(const BinStats& table) {
  std::string text = "bin_low,bin_high,count,confidence,accuracy\n";
  for (std::size_t b = 0; b < table.count.size(); ++b) {
    text += fmt::format("{},{},{},{},{}\n", table.edges[b], table.edges[b + 1], table.count[b],
                        table.confidence[b], table.accuracy[b]);
  }
  return text;
}

}  // namespace tailcal
