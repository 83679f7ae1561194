#include "tailcal/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/core.h>

#include "tailcal/error.hpp"

namespace tailcal {

namespace {

void require_finite(const MatrixF& m, const char* what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (float v : m.row(r)) {
      if (!std::isfinite(v)) {
        throw ValidationError(fmt::format("{} row {} contains a non-finite value", what, r));
      }
    }
  }
}

}  // namespace

LabeledEmbeddingSet::LabeledEmbeddingSet(MatrixF features, MatrixF logits, std::vector<Label> labels)
    : features_(std::move(features)), logits_(std::move(logits)), labels_(std::move(labels)) {
  if (labels_.empty()) throw ValidationError("dataset must contain at least one row");
  if (features_.cols() < 1) throw ValidationError("features must have at least one column");
  if (logits_.cols() < 2) throw ValidationError("logits must have at least two columns (classes)");
  if (features_.rows() != labels_.size() || logits_.rows() != labels_.size()) {
    const std::size_t first_missing =
        std::min({features_.rows(), logits_.rows(), labels_.size()});
    throw ValidationError(fmt::format(
        "dimension mismatch: features has {} rows, logits has {} rows, labels has {} entries "
        "(first unmatched row {})",
        features_.rows(), logits_.rows(), labels_.size(), first_missing));
  }
  require_finite(features_, "features");
  require_finite(logits_, "logits");

  class_counts_.assign(logits_.cols(), 0);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= logits_.cols()) {
      throw ValidationError(fmt::format("label row {} has value {} outside [0, {})", i, labels_[i],
                                        logits_.cols()));
    }
    ++class_counts_[labels_[i]];
  }
}

bool HeadTailPartition::is_head(std::size_t c) const {
  return std::binary_search(head.begin(), head.end(), c);
}

HeadTailPartition partition(std::span<const std::size_t> counts, std::size_t zeta) {
  if (zeta == 0) throw ValidationError("zeta must be a positive integer");
  HeadTailPartition result;
  result.threshold = zeta;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    (counts[c] >= zeta ? result.head : result.tail).push_back(c);
  }
  if (result.head.empty()) {
    const std::size_t largest = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
    throw ValidationError(fmt::format(
        "no head classes: every class has fewer than zeta={} instances (largest class has {}); "
        "lower --zeta",
        zeta, largest));
  }
  return result;
}

std::vector<std::size_t> long_tail_counts(const SyntheticSpec& spec) {
  std::vector<std::size_t> counts(spec.num_classes);
  const double denom = static_cast<double>(spec.num_classes - 1);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const double n = static_cast<double>(spec.max_count) *
                     std::pow(spec.imbalance_factor, -static_cast<double>(c) / denom);
    counts[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n)));
  }
  return counts;
}

std::size_t train_share(std::size_t total) {
  const auto share = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(total)));
  return std::clamp<std::size_t>(share, 1, total);
}

namespace {

struct SplitBuilder {
  std::vector<float> features;
  std::vector<float> logits;
  std::vector<Label> labels;

  LabeledEmbeddingSet build(std::size_t dim, std::size_t classes) && {
    const std::size_t n = labels.size();
    return LabeledEmbeddingSet(MatrixF(n, dim, std::move(features)),
                               MatrixF(n, classes, std::move(logits)), std::move(labels));
  }
};

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ValidationError("synthetic spec needs at least 2 classes");
  if (spec.feature_dim < 1) throw ValidationError("synthetic spec needs feature_dim >= 1");
  if (!(spec.imbalance_factor >= 1.0)) throw ValidationError("imbalance factor must be >= 1");
  if (spec.max_count < 1) throw ValidationError("max_count must be >= 1");
  if (!(spec.overconfidence_scale > 0.0)) throw ValidationError("gamma must be positive");
  if (!(spec.noise_std > 0.0)) throw ValidationError("noise_std must be positive");
  if (!(spec.train_overfit >= 0.0)) throw ValidationError("train_overfit must be >= 0");
  if (spec.test_per_class < 1) throw ValidationError("test_per_class must be >= 1");

  const std::size_t classes = spec.num_classes;
  const std::size_t dim = spec.feature_dim;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> standard(0.0, 1.0);

  std::vector<std::vector<double>> means(classes, std::vector<double>(dim));
  for (auto& mean : means) {
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (double& v : mean) {
        v = standard(rng);
        norm2 += v * v;
      }
    } while (norm2 == 0.0);
    const double scale = spec.separation / std::sqrt(norm2);
    for (double& v : mean) v *= scale;
  }

  const std::vector<std::size_t> counts = long_tail_counts(spec);
  std::vector<double> log_prior(classes, 0.0);
  if (spec.prior_bias) {
    for (std::size_t c = 0; c < classes; ++c) log_prior[c] = std::log(static_cast<double>(counts[c]));
  }

  const double inv_two_var = 1.0 / (2.0 * spec.noise_std * spec.noise_std);
  std::vector<float> x(dim);
  auto emit = [&](SplitBuilder& split, std::size_t label, double noise) {
    for (std::size_t d = 0; d < dim; ++d) {
      x[d] = static_cast<float>(means[label][d] + noise * standard(rng));
    }
    split.features.insert(split.features.end(), x.begin(), x.end());
    // Class-conditional log density up to the normaliser shared by all classes.
    for (std::size_t k = 0; k < classes; ++k) {
      double dist2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = static_cast<double>(x[d]) - means[k][d];
        dist2 += diff * diff;
      }
      split.logits.push_back(
          static_cast<float>(-spec.overconfidence_scale * dist2 * inv_two_var + log_prior[k]));
    }
    split.labels.push_back(static_cast<Label>(label));
  };

  SplitBuilder train, val, test;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t n_train = train_share(counts[c]);
    const double train_noise =
        spec.noise_std * std::pow(static_cast<double>(counts[c]) / static_cast<double>(counts[0]),
                                  spec.train_overfit);
    for (std::size_t i = 0; i < counts[c]; ++i) {
      if (i < n_train) {
        emit(train, c, train_noise);
      } else {
        emit(val, c, spec.noise_std);
      }
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < spec.test_per_class; ++i) emit(test, c, spec.noise_std);
  }
  if (val.labels.empty()) {
    throw ValidationError("synthetic spec leaves the validation split empty; raise max_count");
  }

  return SyntheticData{std::move(train).build(dim, classes), std::move(val).build(dim, classes),
                       std::move(test).build(dim, classes), std::move(means)};
}

}  // namespace tailcal
