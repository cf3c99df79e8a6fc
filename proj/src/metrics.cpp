#include "alphappo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "alphappo/rolling.hpp"

namespace alphappo::metrics {
namespace {

struct Joint {
  std::vector<double> x;
  std::vector<double> y;
};

Joint jointly_valid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("series lengths differ");
  Joint j;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (is_missing(x[i]) || is_missing(y[i])) continue;
    j.x.push_back(x[i]);
    j.y.push_back(y[i]);
  }
  return j;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const double mx = rolling::sample_mean(x);
  const double my = rolling::sample_mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> information_coefficient(std::span<const double> signal,
                                              std::span<const double> future_return) {
  const auto j = jointly_valid(signal, future_return);
  if (j.x.size() < 3) throw ValidationError("information coefficient needs at least 3 valid rows");
  const auto rx = average_ranks(j.x);
  const auto ry = average_ranks(j.y);
  return pearson(rx, ry);
}

std::vector<std::size_t> equal_frequency_bins(std::span<const double> x, std::size_t bins) {
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = x.size();
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto below = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), x[i]) - sorted.begin());
    out[i] = std::min(bins - 1, bins * below / n);
  }
  return out;
}

double mutual_information(std::span<const double> x, std::span<const double> y, std::size_t bins) {
  if (bins < 2) throw ValidationError("mutual information needs at least 2 bins");
  const auto j = jointly_valid(x, y);
  const std::size_t n = j.x.size();
  if (n < bins) throw ValidationError("mutual information: fewer valid rows than bins");
  const auto bx = equal_frequency_bins(j.x, bins);
  const auto by = equal_frequency_bins(j.y, bins);

  std::vector<double> joint(bins * bins, 0.0), px(bins, 0.0), py(bins, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    joint[bx[i] * bins + by[i]] += 1.0;
    px[bx[i]] += 1.0;
    py[by[i]] += 1.0;
  }
  const double total = static_cast<double>(n);
  double mi = 0.0;
  for (std::size_t a = 0; a < bins; ++a) {
    for (std::size_t b = 0; b < bins; ++b) {
      const double c = joint[a * bins + b];
      if (c == 0.0) continue;
      // p(x,y) log(p(x,y) / (p(x) p(y))) with counts: c/n * log(c n / (cx cy))
      mi += c / total * std::log(c * total / (px[a] * py[b]));
    }
  }
  return std::max(mi, 0.0);
}

double binned_entropy(std::span<const double> x, std::size_t bins) {
  std::vector<double> valid;
  for (double v : x) {
    if (!is_missing(v)) valid.push_back(v);
  }
  const auto b = equal_frequency_bins(valid, bins);
  std::vector<double> counts(bins, 0.0);
  for (auto k : b) counts[k] += 1.0;
  const double n = static_cast<double>(valid.size());
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= c / n * std::log(c / n);
  }
  return h;
}

double cumulative_return(std::span<const double> returns) {
  double growth = 1.0;
  for (double r : returns) {
    if (!(r > -1.0)) throw NumericError("cumulative return undefined: period return <= -100%");
    growth *= 1.0 + r;
  }
  return growth - 1.0;
}

std::optional<double> sharpe_ratio(std::span<const double> returns, double periods_per_year, double risk_free) {
  if (returns.size() < 2) throw ValidationError("Sharpe ratio needs at least 2 returns");
  std::vector<double> excess(returns.begin(), returns.end());
  for (auto& r : excess) r -= risk_free;
  const double sd = rolling::sample_stddev(excess);
  if (!(sd > 0.0)) return std::nullopt;
  return rolling::sample_mean(excess) / sd * std::sqrt(periods_per_year);
}

std::vector<double> drawdown_series(std::span<const double> values) {
  std::vector<double> out(values.size());
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0)) throw ValidationError("drawdown needs positive values");
    peak = std::max(peak, values[i]);
    out[i] = values[i] / peak - 1.0;
  }
  return out;
}

double max_drawdown(std::span<const double> values) {
  if (values.empty()) throw ValidationError("max drawdown needs at least one value");
  const auto dd = drawdown_series(values);
  return std::min(0.0, *std::min_element(dd.begin(), dd.end()));
}

}  // namespace alphappo::metrics
