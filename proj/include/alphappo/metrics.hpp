#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "alphappo/common.hpp"

// Factor- and strategy-level evaluation. Undefined results (zero variance)
// come back as std::nullopt, never as 0.
namespace alphappo::metrics {

/// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

/// Spearman rank correlation over rows where both inputs are valid.
/// Throws ValidationError with fewer than 3 such rows.
std::optional<double> information_coefficient(std::span<const double> signal,
                                              std::span<const double> future_return);

/// Equal-frequency bin index for each value: a value with k smaller values in
/// a sample of n lands in bin min(bins - 1, floor(bins k / n)), so ties share
/// a bin.
std::vector<std::size_t> equal_frequency_bins(std::span<const double> x, std::size_t bins);

/// Plug-in mutual information in nats between x and y after independent
/// equal-frequency discretization of the jointly valid rows.
double mutual_information(std::span<const double> x, std::span<const double> y, std::size_t bins = 16);

/// Entropy in nats of the equal-frequency discretization of x.
double binned_entropy(std::span<const double> x, std::size_t bins);

/// prod(1 + r) - 1. Throws NumericError when any r <= -1.
double cumulative_return(std::span<const double> returns);

/// mean / sample std * sqrt(periods_per_year), after subtracting a per-period
/// risk-free rate.
std::optional<double> sharpe_ratio(std::span<const double> returns, double periods_per_year = 252.0,
                                   double risk_free = 0.0);

/// min_t(values_t / running_max_t - 1), a number in [-1, 0].
double max_drawdown(std::span<const double> values);

/// Running drawdown series (values_t / running_max_t - 1).
std::vector<double> drawdown_series(std::span<const double> values);

}  // namespace alphappo::metrics
