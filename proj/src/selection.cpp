#include "alphappo/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "alphappo/text_util.hpp"

namespace alphappo::selection {

std::string method_name(Method m) {
  switch (m) {
    case Method::All: return "all";
    case Method::LowCorrelation: return "low_correlation";
    case Method::HighContribution: return "high_contribution";
    case Method::Random: return "random";
  }
  return "?";
}

Eigen::MatrixXd correlation_matrix(const AlphaMatrix& matrix) {
  const auto n = static_cast<Eigen::Index>(matrix.cols());
  const auto rows = static_cast<Eigen::Index>(matrix.train_rows);
  const auto& z = matrix.standardized;
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(n, n, kMissing);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a; b < n; ++b) {
      std::vector<double> x, y;
      for (Eigen::Index t = 0; t < rows; ++t) {
        if (is_missing(z(t, a)) || is_missing(z(t, b))) continue;
        x.push_back(z(t, a));
        y.push_back(z(t, b));
      }
      if (x.size() < 3) continue;
      const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
      const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
      double sxy = 0.0, sxx = 0.0, syy = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
      }
      if (sxx == 0.0 || syy == 0.0) continue;
      const double r = a == b ? 1.0 : std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
      c(a, b) = r;
      c(b, a) = r;
    }
  }
  return c;
}

SelectionResult select_low_correlation(const AlphaMatrix& matrix, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("correlation threshold must lie in (0, 1]");
  const auto corr = correlation_matrix(matrix);
  SelectionResult out;
  out.method = Method::LowCorrelation;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(matrix.cols()); ++j) {
    Eigen::Index culprit = -1;
    for (auto k : kept) {
      const double r = corr(j, k);
      if (!is_missing(r) && std::abs(r) > threshold) {
        culprit = k;
        break;
      }
    }
    const auto& name = matrix.names[static_cast<std::size_t>(j)];
    if (culprit < 0) {
      kept.push_back(j);
      out.kept.push_back(name);
    } else {
      out.dropped.push_back({name, "corr " + text_util::format_double(corr(j, culprit)) + " with " +
                                       matrix.names[static_cast<std::size_t>(culprit)]});
    }
  }
  return out;
}

SelectionResult select_high_contribution(const std::vector<std::string>& names, const boost::GainReport& report,
                                         std::size_t k) {
  if (report.importance.size() != names.size()) throw ValidationError("importance and name counts differ");
  if (k < 1 || k > names.size()) throw ValidationError("k must lie in [1, number of alphas]");
  if (std::all_of(report.importance.begin(), report.importance.end(), [](double g) { return g == 0.0; })) {
    throw ValidationError("every gain importance is zero; no contribution signal to rank");
  }
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return report.importance[a] > report.importance[b]; });
  std::vector<char> keep(names.size(), 0);
  for (std::size_t i = 0; i < k; ++i) keep[order[i]] = 1;

  SelectionResult out;
  out.method = Method::HighContribution;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto i = order[rank];
    if (!keep[i]) {
      out.dropped.push_back({names[i], "gain rank " + std::to_string(rank + 1) + " (importance " +
                                           text_util::format_double(report.importance[i]) + ")"});
    }
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (keep[i]) out.kept.push_back(names[i]);
  }
  return out;
}

SelectionResult select_random(const std::vector<std::string>& names, std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > names.size()) throw ValidationError("k must lie in [1, number of alphas]");
  std::vector<std::size_t> idx(names.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first k slots become the sample.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<char> keep(names.size(), 0);
  for (std::size_t i = 0; i < k; ++i) keep[idx[i]] = 1;
  SelectionResult out;
  out.method = Method::Random;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (keep[i]) {
      out.kept.push_back(names[i]);
    } else {
      out.dropped.push_back({names[i], "not sampled (seed " + std::to_string(seed) + ")"});
    }
  }
  return out;
}

SelectionResult select_all(const std::vector<std::string>& names) {
  if (names.empty()) throw ValidationError("no alphas to select from");
  return {Method::All, names, {}};
}

}  // namespace alphappo::selection
