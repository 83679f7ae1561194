#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailcal/datamodel.hpp"
#include "tailcal/gaussians.hpp"

namespace tailcal {

enum class TransferStrategy { attention, uniform, onehot };

TransferStrategy parse_strategy(const std::string& name);
std::string to_string(TransferStrategy strategy);

inline constexpr double kDefaultAlpha = 0.998;
inline constexpr double kDefaultClipLow = 0.3;
inline constexpr double kDefaultClipHigh = 5.0;

// How much each head class contributes to a tail class.
//   attention: softmax(-d / sqrt(D)) over W2 distances d to the heads
//   uniform:   1 / |heads| everywhere
//   onehot:    1 at the nearest head (lowest index on ties), 0 elsewhere
std::vector<double> attention_scores(const ClassGaussian& tail, std::span<const ClassGaussian> heads,
                                     std::size_t feature_dim,
                                     TransferStrategy strategy = TransferStrategy::attention);

// The same scores from precomputed distances.
std::vector<double> attention_from_distances(std::span<const double> distances, std::size_t feature_dim,
                                             TransferStrategy strategy);

// mean* = alpha * mean_c + (1 - alpha) * sum_k s_k mean_k, likewise for std.
ClassGaussian merge_statistics(const ClassGaussian& tail, std::span<const ClassGaussian> heads,
                               std::span<const double> scores, double alpha);

struct TransferPlan {
  std::vector<std::size_t> heads;                        // head class ids, attention column order
  std::map<std::size_t, std::vector<double>> attention;  // tail class -> scores over `heads`
  std::map<std::size_t, ClassGaussian> merged;           // tail class -> estimated balanced stats
  double alpha = kDefaultAlpha;
  TransferStrategy strategy = TransferStrategy::attention;
};

// Builds attention and merged statistics for every tail class of `parts`.
TransferPlan build_transfer_plan(const ClassStats& source, const HeadTailPartition& parts,
                                 double alpha = kDefaultAlpha,
                                 TransferStrategy strategy = TransferStrategy::attention);

struct ImportanceWeights {
  std::vector<double> weights;
  double clip_low = kDefaultClipLow;
  double clip_high = kDefaultClipHigh;
};

// Head samples get weight 1; a tail sample of class c gets
// clamp(q*_c(x) / p_c(x), clip_low, clip_high) with the ratio formed in log
// space. Throws ValidationError when a label has no source statistics.
ImportanceWeights importance_weights(const LabeledEmbeddingSet& set, const ClassStats& source,
                                     const TransferPlan& plan, const HeadTailPartition& parts,
                                     double clip_low = kDefaultClipLow,
                                     double clip_high = kDefaultClipHigh);

struct WeightHistogram {
  std::vector<double> edges;  // bins + 1 values spanning [clip_low, clip_high]
  std::vector<std::size_t> counts;
  std::vector<double> density;  // count / (total * width)
};

// Equal-width bins over [clip_low, clip_high]; bins are [left, right) except
// the last, which is closed.
WeightHistogram weight_histogram(const ImportanceWeights& w, std::size_t bins);

nlohmann::json to_json(const TransferPlan& plan);
nlohmann::json to_json(const ImportanceWeights& w);
std::string to_csv(const WeightHistogram& h);

}  // namespace tailcal
