#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmftsim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using Rng = std::mt19937_64;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Neumaier-compensated running sum. Summation order is the insertion order,
/// so results are reproducible regardless of how callers schedule work.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Mean of a sequence with fixed-order compensated summation.
inline double compensated_mean(std::span<const double> xs) {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return xs.empty() ? 0.0 : acc.value() / static_cast<double>(xs.size());
}

inline double compensated_mean(const VectorXd& v) {
  return compensated_mean(std::span<const double>(v.data(), static_cast<size_t>(v.size())));
}

/// Mean of the elementwise product of two vectors.
inline double compensated_dot_mean(const VectorXd& a, const VectorXd& b) {
  CompensatedSum acc;
  for (Eigen::Index i = 0; i < a.size(); ++i) acc.add(a[i] * b[i]);
  return a.size() == 0 ? 0.0 : acc.value() / static_cast<double>(a.size());
}

void log_warn(const std::string& message);
void set_warnings_enabled(bool enabled);
/// Number of warnings emitted since process start (used by tests).
std::uint64_t warning_count();

}  // namespace dmftsim
