#pragma once

#include <cstddef>
#include <span>

#include "alphappo/common.hpp"

// Trailing row-count windows. The value at row t uses rows (t - window, t]
// only, and is missing until the window holds `window` valid values.
namespace alphappo::rolling {

Series mean(std::span<const double> x, std::size_t window);

/// Sample standard deviation (n - 1 denominator). Requires window >= 2.
Series stddev(std::span<const double> x, std::size_t window);

/// Empirical quantile with linear interpolation between order statistics:
/// h = (n - 1) q, value = x[floor(h)] + (h - floor(h)) (x[floor(h)+1] - x[floor(h)]).
Series quantile(std::span<const double> x, double q, std::size_t window);

/// Quantile of an unordered sample using the same interpolation rule.
double sample_quantile(std::span<const double> values, double q);

/// Arithmetic mean and sample standard deviation of a whole sample.
double sample_mean(std::span<const double> values);
double sample_stddev(std::span<const double> values);

}  // namespace alphappo::rolling
