#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tailcal/matrix.hpp"

namespace tailcal {

using Label = std::uint32_t;

// One split (train, val or test) of exported model outputs: penultimate-layer
// features, logits and integer labels. Immutable once constructed; the
// constructor validates every invariant and derives the per-class counts.
class LabeledEmbeddingSet {
 public:
  // Throws ValidationError on shape mismatch, non-finite entries or labels
  // outside [0, logits.cols()). Errors name the offending row.
  LabeledEmbeddingSet(MatrixF features, MatrixF logits, std::vector<Label> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t feature_dim() const noexcept { return features_.cols(); }
  std::size_t num_classes() const noexcept { return logits_.cols(); }

  const MatrixF& features() const noexcept { return features_; }
  const MatrixF& logits() const noexcept { return logits_; }
  std::span<const Label> labels() const noexcept { return labels_; }
  std::span<const std::size_t> class_counts() const noexcept { return class_counts_; }

  bool operator==(const LabeledEmbeddingSet&) const = default;

 private:
  MatrixF features_;
  MatrixF logits_;
  std::vector<Label> labels_;
  std::vector<std::size_t> class_counts_;
};

// Classes with at least `threshold` training instances are head classes,
// the rest are tail classes. Both lists are sorted ascending.
struct HeadTailPartition {
  std::vector<std::size_t> head;
  std::vector<std::size_t> tail;
  std::size_t threshold = 100;

  bool is_head(std::size_t c) const;
  std::size_t num_classes() const noexcept { return head.size() + tail.size(); }
};

inline constexpr std::size_t kDefaultZeta = 100;

// Throws ValidationError when zeta == 0 or when no class reaches zeta.
HeadTailPartition partition(std::span<const std::size_t> counts, std::size_t zeta = kDefaultZeta);

// Long-tailed Gaussian-blob benchmark. Class c (0-based) has
// round(max_count * IF^(-c/(C-1))) instances split 80/20 into train and val;
// the test split is balanced.
struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t feature_dim = 16;
  double imbalance_factor = 100.0;
  std::size_t max_count = 500;
  double overconfidence_scale = 1.0;  // gamma: multiplies the log-density scores
  bool prior_bias = false;            // adds log n_c to every class-c logit
  std::uint64_t seed = 0;
  std::size_t test_per_class = 1000;
  double separation = 2.5;            // norm of every class mean
  double noise_std = 1.0;             // shared isotropic feature noise
  // Training-split noise of class c is noise_std * (n_c / n_1)^train_overfit,
  // imitating a backbone that memorises its rare training instances. Held-out
  // splits always use noise_std; 0 disables the effect.
  double train_overfit = 0.25;
};

struct SyntheticData {
  LabeledEmbeddingSet train;
  LabeledEmbeddingSet val;
  LabeledEmbeddingSet test;
  std::vector<std::vector<double>> class_means;
};

std::vector<std::size_t> long_tail_counts(const SyntheticSpec& spec);

// Per-class train share of `total` instances: round(0.8 * total), kept in
// [1, total] so every class can be fitted.
std::size_t train_share(std::size_t total);

// Throws ValidationError for C < 2, D < 1, IF < 1, max_count < 1, gamma <= 0,
// or a spec that leaves the validation split empty.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace tailcal
