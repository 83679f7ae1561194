#pragma once

#include <stdexcept>
#include <string>

namespace tailcal {

// Malformed input: bad dimensions, non-finite values, out-of-range labels or
// parameters outside their documented domain.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An upstream artifact (stats, partition, fit) that a command depends on is
// absent or unreadable.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A Renyi d2 integral diverges, so the quantity asked for does not exist.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t dimension)
      : std::runtime_error(what), dimension_(dimension) {}

  std::size_t dimension() const noexcept { return dimension_; }

 private:
  std::size_t dimension_;
};

}  // namespace tailcal
