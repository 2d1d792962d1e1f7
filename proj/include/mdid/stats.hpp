#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "mdid/error.hpp"

namespace mdid::stats {

/// Neumaier-compensated running sum. Results depend only on the order of
/// the added terms, which callers keep fixed (index order) so aggregates are
/// reproducible regardless of how the terms were produced.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double sum(std::span<const double> xs) noexcept {
  CompensatedSum s;
  for (double v : xs) s.add(v);
  return s.value();
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw ValidationError("mean of empty sample");
  return sum(xs) / static_cast<double>(xs.size());
}

/// Two-pass sample variance with n-1 denominator.
inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw ValidationError("sample variance needs at least 2 values");
  const double m = mean(xs);
  CompensatedSum s;
  for (double v : xs) s.add((v - m) * (v - m));
  return s.value() / static_cast<double>(xs.size() - 1);
}

inline double sample_sd(std::span<const double> xs) { return std::sqrt(sample_variance(xs)); }

/// Mean squared deviation from a fixed reference value.
inline double mean_square_about(std::span<const double> xs, double ref) {
  if (xs.empty()) throw ValidationError("mean square of empty sample");
  CompensatedSum s;
  for (double v : xs) s.add((v - ref) * (v - ref));
  return s.value() / static_cast<double>(xs.size());
}

}  // namespace mdid::stats
