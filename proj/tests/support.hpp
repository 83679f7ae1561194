#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tailcal/datamodel.hpp"
#include "tailcal/gaussians.hpp"

namespace testing {

inline tailcal::MatrixF matrix(std::size_t rows, std::size_t cols, std::vector<float> values) {
  return tailcal::MatrixF(rows, cols, std::move(values));
}

inline tailcal::MatrixD matrix_d(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return tailcal::MatrixD(rows, cols, std::move(values));
}

inline tailcal::ClassGaussian gaussian(std::vector<double> mean, std::vector<double> std, std::size_t count = 1) {
  return tailcal::ClassGaussian{std::move(mean), std::move(std), count};
}

inline tailcal::ClassGaussian gaussian1(double mean, double std) { return gaussian({mean}, {std}); }

// Random logits z with labels drawn from softmax(z / temperature), so the
// NLL-optimal temperature of the pair is `temperature` in the large-N limit.
struct TemperedSample {
  tailcal::MatrixF logits;
  std::vector<tailcal::Label> labels;
};

inline TemperedSample tempered_sample(std::size_t n, std::size_t classes, double temperature, double logit_scale,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, logit_scale);
  TemperedSample s{tailcal::MatrixF(n, classes), std::vector<tailcal::Label>(n)};
  std::vector<double> p(classes);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = s.logits.row(i);
    double peak = -1e300;
    for (auto& v : row) {
      v = static_cast<float>(normal(rng));
      peak = std::max(peak, v / temperature);
    }
    for (std::size_t k = 0; k < classes; ++k) p[k] = std::exp(row[k] / temperature - peak);
    std::discrete_distribution<tailcal::Label> pick(p.begin(), p.end());
    s.labels[i] = pick(rng);
  }
  return s;
}

// Removed on destruction; unique per process and call.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tailcal_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
