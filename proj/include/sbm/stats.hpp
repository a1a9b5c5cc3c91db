#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace sbm {

/// Welford accumulator for mean, variance and standard error of the mean.
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }
  double stderror() const {
    return n_ > 1 ? stddev() / std::sqrt(static_cast<double>(n_)) : 0.0;
  }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit least_squares_fit(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xm += x[i];
    ym += y[i];
  }
  xm /= static_cast<double>(n);
  ym /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - xm) * (y[i] - ym);
    sxx += (x[i] - xm) * (x[i] - xm);
  }
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = ym - fit.slope * xm;
  return fit;
}

/// Slope of log(y) against log(x); inputs must be strictly positive.
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  return least_squares_fit(lx, ly).slope;
}

}  // namespace sbm
