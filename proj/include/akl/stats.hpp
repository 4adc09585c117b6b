#pragma once

#include <vector>

namespace akl {

/// Median of the values; NaN for an empty input.
double median(std::vector<double> values);

/// Linear-interpolated quantile, q in [0, 1]; NaN for an empty input.
double percentile(std::vector<double> values, double q);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares line through (log x, log y). Requires >= 2 points with
/// positive coordinates.
LineFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace akl
