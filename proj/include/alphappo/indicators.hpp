#pragma once

#include <cstddef>
#include <span>

#include "alphappo/common.hpp"
#include "alphappo/market_data.hpp"

// Technical indicators referenced by the alpha corpus. All are trailing: the
// value at row t depends on rows <= t only. Warm-up rows are missing.
namespace alphappo::indicators {

Series sma(std::span<const double> close, std::size_t window);

/// alpha = 2 / (window + 1), seeded with the SMA of the first `window` valid
/// rows. A missing input restarts the seeding after it.
Series ema(std::span<const double> close, std::size_t window);

/// close_t - close_{t - window}
Series momentum(std::span<const double> close, std::size_t window);

/// Wilder RSI. Averages are seeded with the plain mean of the first `window`
/// gains/losses, then smoothed as avg = (avg (window - 1) + x) / window.
/// No losses gives 100, no gains gives 0, a flat window gives 50.
Series rsi(std::span<const double> close, std::size_t window = 14);

struct Macd {
  Series macd;
  Series signal;
};
Macd macd(std::span<const double> close, std::size_t fast = 12, std::size_t slow = 26, std::size_t signal = 9);

struct Bands {
  Series upper;
  Series lower;
};
/// sma +/- k * trailing sample standard deviation.
Bands bollinger(std::span<const double> close, std::size_t window = 20, double k = 2.0);

/// Starts at 0 and adds volume_t * sign(close_t - close_{t-1}).
Series obv(std::span<const double> close, std::span<const double> volume);

/// Adds SMA_5, SMA_20, EMA_10, Momentum_3, Momentum_10, RSI_14, MACD,
/// MACD_Signal, BB_Upper, BB_Lower and OBV computed from C_t and V_t.
void attach_standard_indicators(FeatureFrame& frame);

}  // namespace alphappo::indicators
