#include "alphappo/rolling.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace alphappo::rolling {
namespace {

template <typename Reduce>
Series apply_window(std::span<const double> x, std::size_t window, Reduce reduce) {
  if (window == 0) throw ValidationError("rolling window must be >= 1");
  Series out(x.size(), kMissing);
  if (x.size() < window) return out;
  for (std::size_t t = window - 1; t < x.size(); ++t) {
    auto w = x.subspan(t + 1 - window, window);
    if (std::any_of(w.begin(), w.end(), is_missing)) continue;
    out[t] = reduce(w);
  }
  return out;
}

}  // namespace

double sample_mean(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) return kMissing;
  const double m = sample_mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double sample_quantile(std::span<const double> values, double q) {
  if (values.empty()) return kMissing;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

Series mean(std::span<const double> x, std::size_t window) {
  return apply_window(x, window, [](std::span<const double> w) { return sample_mean(w); });
}

Series stddev(std::span<const double> x, std::size_t window) {
  if (window < 2) throw ValidationError("rolling stddev needs window >= 2");
  return apply_window(x, window, [](std::span<const double> w) { return sample_stddev(w); });
}

Series quantile(std::span<const double> x, double q, std::size_t window) {
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile must lie in [0, 1]");
  return apply_window(x, window, [q](std::span<const double> w) { return sample_quantile(w, q); });
}

}  // namespace alphappo::rolling
