#include "alphappo/indicators.hpp"

#include <string>

#include "alphappo/rolling.hpp"

namespace alphappo::indicators {
namespace {

void require_window(std::size_t window) {
  if (window == 0) throw ValidationError("indicator window must be >= 1");
}

}  // namespace

Series sma(std::span<const double> close, std::size_t window) {
  require_window(window);
  return rolling::mean(close, window);
}

Series ema(std::span<const double> close, std::size_t window) {
  require_window(window);
  const double alpha = 2.0 / (static_cast<double>(window) + 1.0);
  Series out(close.size(), kMissing);
  std::size_t run = 0;  // consecutive valid inputs since the last gap
  double seed_sum = 0.0;
  double prev = kMissing;
  for (std::size_t t = 0; t < close.size(); ++t) {
    if (is_missing(close[t])) {
      run = 0;
      seed_sum = 0.0;
      prev = kMissing;
      continue;
    }
    ++run;
    if (run < window) {
      seed_sum += close[t];
    } else if (run == window) {
      seed_sum += close[t];
      prev = seed_sum / static_cast<double>(window);
      out[t] = prev;
    } else {
      prev = alpha * close[t] + (1.0 - alpha) * prev;
      out[t] = prev;
    }
  }
  return out;
}

Series momentum(std::span<const double> close, std::size_t window) {
  require_window(window);
  Series out(close.size(), kMissing);
  for (std::size_t t = window; t < close.size(); ++t) out[t] = close[t] - close[t - window];
  return out;
}

Series rsi(std::span<const double> close, std::size_t window) {
  require_window(window);
  Series out(close.size(), kMissing);
  if (close.size() <= window) return out;
  const double n = static_cast<double>(window);
  double avg_gain = 0.0;
  double avg_loss = 0.0;
  auto value = [](double g, double l) {
    if (l == 0.0) return g == 0.0 ? 50.0 : 100.0;
    const double rs = g / l;
    return 100.0 - 100.0 / (1.0 + rs);
  };
  for (std::size_t t = 1; t < close.size(); ++t) {
    const double d = close[t] - close[t - 1];
    const double gain = d > 0 ? d : 0.0;
    const double loss = d < 0 ? -d : 0.0;
    if (t < window) {
      avg_gain += gain;
      avg_loss += loss;
      continue;
    }
    if (t == window) {
      avg_gain = (avg_gain + gain) / n;
      avg_loss = (avg_loss + loss) / n;
    } else {
      avg_gain = (avg_gain * (n - 1.0) + gain) / n;
      avg_loss = (avg_loss * (n - 1.0) + loss) / n;
    }
    out[t] = value(avg_gain, avg_loss);
  }
  return out;
}

Macd macd(std::span<const double> close, std::size_t fast, std::size_t slow, std::size_t signal) {
  if (fast >= slow) throw ValidationError("MACD fast window must be shorter than slow window");
  const auto f = ema(close, fast);
  const auto s = ema(close, slow);
  Macd out;
  out.macd.resize(close.size());
  for (std::size_t t = 0; t < close.size(); ++t) out.macd[t] = f[t] - s[t];
  out.signal = ema(out.macd, signal);
  return out;
}

Bands bollinger(std::span<const double> close, std::size_t window, double k) {
  if (window < 2) throw ValidationError("Bollinger window must be >= 2");
  if (k < 0) throw ValidationError("Bollinger width must be non-negative");
  const auto mid = rolling::mean(close, window);
  const auto sd = rolling::stddev(close, window);
  Bands out{Series(close.size(), kMissing), Series(close.size(), kMissing)};
  for (std::size_t t = 0; t < close.size(); ++t) {
    if (is_missing(mid[t]) || is_missing(sd[t])) continue;
    out.upper[t] = mid[t] + k * sd[t];
    out.lower[t] = mid[t] - k * sd[t];
  }
  return out;
}

Series obv(std::span<const double> close, std::span<const double> volume) {
  if (close.size() != volume.size()) throw ValidationError("OBV needs equal-length close and volume");
  Series out(close.size(), kMissing);
  if (close.empty()) return out;
  out[0] = 0.0;
  for (std::size_t t = 1; t < close.size(); ++t) {
    const double d = close[t] - close[t - 1];
    const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
    out[t] = out[t - 1] + volume[t] * sign;
  }
  return out;
}

void attach_standard_indicators(FeatureFrame& frame) {
  const auto& c = frame.column(kClose);
  const auto& v = frame.column(kVolume);
  frame.set("SMA_5", sma(c, 5));
  frame.set("SMA_20", sma(c, 20));
  frame.set("EMA_10", ema(c, 10));
  frame.set("Momentum_3", momentum(c, 3));
  frame.set("Momentum_10", momentum(c, 10));
  frame.set("RSI_14", rsi(c, 14));
  auto m = macd(c);
  frame.set("MACD", std::move(m.macd));
  frame.set("MACD_Signal", std::move(m.signal));
  auto bb = bollinger(c);
  frame.set("BB_Upper", std::move(bb.upper));
  frame.set("BB_Lower", std::move(bb.lower));
  frame.set("OBV", obv(c, v));
}

}  // namespace alphappo::indicators
