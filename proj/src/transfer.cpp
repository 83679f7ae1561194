#include "tailcal/transfer.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "tailcal/error.hpp"

namespace tailcal {

TransferStrategy parse_strategy(const std::string& name) {
  if (name == "attention") return TransferStrategy::attention;
  if (name == "uniform") return TransferStrategy::uniform;
  if (name == "onehot") return TransferStrategy::onehot;
  throw ValidationError(fmt::format("unknown strategy '{}' (expected attention, uniform or onehot)", name));
}

std::string to_string(TransferStrategy strategy) {
  switch (strategy) {
    case TransferStrategy::attention: return "attention";
    case TransferStrategy::uniform: return "uniform";
    case TransferStrategy::onehot: return "onehot";
  }
  return "attention";
}

std::vector<double> attention_from_distances(std::span<const double> distances, std::size_t feature_dim,
                                             TransferStrategy strategy) {
  if (distances.empty()) throw ValidationError("attention needs at least one head class");
  if (feature_dim == 0) throw ValidationError("feature dimension must be positive");
  const std::size_t k = distances.size();
  std::vector<double> scores(k, 0.0);

  switch (strategy) {
    case TransferStrategy::uniform:
      std::fill(scores.begin(), scores.end(), 1.0 / static_cast<double>(k));
      break;
    case TransferStrategy::onehot: {
      // min_element returns the first minimum, i.e. the lowest index on ties.
      const auto nearest = std::min_element(distances.begin(), distances.end()) - distances.begin();
      scores[static_cast<std::size_t>(nearest)] = 1.0;
      break;
    }
    case TransferStrategy::attention: {
      const double scale = 1.0 / std::sqrt(static_cast<double>(feature_dim));
      const double best = *std::min_element(distances.begin(), distances.end());
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        scores[i] = std::exp(-(distances[i] - best) * scale);
        total += scores[i];
      }
      for (double& s : scores) s /= total;
      break;
    }
  }
  return scores;
}

std::vector<double> attention_scores(const ClassGaussian& tail, std::span<const ClassGaussian> heads,
                                     std::size_t feature_dim, TransferStrategy strategy) {
  if (heads.empty()) throw ValidationError("attention needs at least one head class");
  std::vector<double> distances;
  distances.reserve(heads.size());
  for (const auto& head : heads) distances.push_back(wasserstein2(tail, head));
  return attention_from_distances(distances, feature_dim, strategy);
}

ClassGaussian merge_statistics(const ClassGaussian& tail, std::span<const ClassGaussian> heads,
                               std::span<const double> scores, double alpha) {
  if (scores.size() != heads.size()) {
    throw ValidationError(
        fmt::format("{} attention scores for {} head classes", scores.size(), heads.size()));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError(fmt::format("alpha {} outside [0, 1]", alpha));

  const std::size_t dim = tail.dim();
  std::vector<double> head_mean(dim, 0.0);
  std::vector<double> head_std(dim, 0.0);
  for (std::size_t k = 0; k < heads.size(); ++k) {
    if (heads[k].dim() != dim) {
      throw ValidationError(fmt::format("head {} has dimension {}, tail has {}", k, heads[k].dim(), dim));
    }
    for (std::size_t d = 0; d < dim; ++d) {
      head_mean[d] += scores[k] * heads[k].mean[d];
      head_std[d] += scores[k] * heads[k].std[d];
    }
  }

  ClassGaussian merged;
  merged.count = tail.count;
  merged.mean.resize(dim);
  merged.std.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    merged.mean[d] = alpha * tail.mean[d] + (1.0 - alpha) * head_mean[d];
    merged.std[d] = alpha * tail.std[d] + (1.0 - alpha) * head_std[d];
  }
  return merged;
}

TransferPlan build_transfer_plan(const ClassStats& source, const HeadTailPartition& parts, double alpha,
                                 TransferStrategy strategy) {
  if (parts.head.empty()) throw ValidationError("transfer needs at least one head class; lower zeta");
  if (parts.num_classes() != source.size()) {
    throw ValidationError(fmt::format("partition covers {} classes but statistics have {}",
                                      parts.num_classes(), source.size()));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError(fmt::format("alpha {} outside [0, 1]", alpha));

  TransferPlan plan;
  plan.heads = parts.head;
  plan.alpha = alpha;
  plan.strategy = strategy;

  std::vector<ClassGaussian> heads;
  heads.reserve(parts.head.size());
  for (std::size_t h : parts.head) heads.push_back(source.at(h));
  const std::size_t dim = heads.front().dim();

  for (std::size_t c : parts.tail) {
    const ClassGaussian& tail = source.at(c);
    auto scores = attention_scores(tail, heads, dim, strategy);
    plan.merged.emplace(c, merge_statistics(tail, heads, scores, alpha));
    plan.attention.emplace(c, std::move(scores));
  }
  return plan;
}

ImportanceWeights importance_weights(const LabeledEmbeddingSet& set, const ClassStats& source,
                                     const TransferPlan& plan, const HeadTailPartition& parts,
                                     double clip_low, double clip_high) {
  if (!(clip_low > 0.0 && clip_low <= clip_high)) {
    throw ValidationError(fmt::format("invalid clip range [{}, {}]", clip_low, clip_high));
  }
  ImportanceWeights out;
  out.clip_low = clip_low;
  out.clip_high = clip_high;
  out.weights.resize(set.size());

  const auto labels = set.labels();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::size_t c = labels[i];
    if (c >= source.size()) {
      throw ValidationError(fmt::format("row {}: class {} has no source statistics", i, c));
    }
    if (parts.is_head(c)) {
      out.weights[i] = 1.0;
      continue;
    }
    const auto merged = plan.merged.find(c);
    if (merged == plan.merged.end()) {
      throw ValidationError(fmt::format("row {}: tail class {} missing from the transfer plan", i, c));
    }
    const auto x = set.features().row(i);
    const double log_ratio = log_density(merged->second, x) - log_density(source[c], x);
    out.weights[i] = std::clamp(std::exp(log_ratio), clip_low, clip_high);
  }
  return out;
}

WeightHistogram weight_histogram(const ImportanceWeights& w, std::size_t bins) {
  if (bins == 0) throw ValidationError("histogram needs at least one bin");
  WeightHistogram h;
  const double lo = w.clip_low;
  const double hi = w.clip_high;
  const double width = (hi - lo) / static_cast<double>(bins);
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
  h.edges.back() = hi;
  h.counts.assign(bins, 0);

  for (double v : w.weights) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>(std::max(0.0, std::floor((v - lo) / width))) : 0;
    b = std::min(b, bins - 1);
    // Snap to the stored edges so membership agrees with the exported table.
    while (b > 0 && v < h.edges[b]) --b;
    while (b + 1 < bins && v >= h.edges[b + 1]) ++b;
    ++h.counts[b];
  }

  const double total = static_cast<double>(w.weights.size());
  h.density.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double bin_width = h.edges[b + 1] - h.edges[b];
    h.density[b] = (total > 0.0 && bin_width > 0.0) ? static_cast<double>(h.counts[b]) / (total * bin_width)
                                                     : 0.0;
  }
  return h;
}

nlohmann::json to_json(const TransferPlan& plan) {
  nlohmann::json tails = nlohmann::json::array();
  for (const auto& [c, scores] : plan.attention) {
    const ClassGaussian& g = plan.merged.at(c);
    tails.push_back({{"class", c}, {"attention", scores}, {"merged_mean", g.mean}, {"merged_std", g.std}});
  }
  return {{"alpha", plan.alpha}, {"strategy", to_string(plan.strategy)}, {"heads", plan.heads},
          {"tails", tails}};
}

nlohmann::json to_json(const ImportanceWeights& w) {
  return {{"clip_low", w.clip_low}, {"clip_high", w.clip_high}, {"weights", w.weights}};
}

std::string to_csv(const WeightHistogram& h) {
  std::string text = "bin_left,bin_right,count,density\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    text += fmt::format("{},{},{},{}\n", h.edges[b], h.edges[b + 1], h.counts[b], h.density[b]);
  }
  return text;
}

}  // namespace tailcal
