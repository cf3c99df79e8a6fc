#include "alphappo/boost_fi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace alphappo::boost {

void BoostConfig::validate() const {
  if (n_trees < 1) throw ValidationError("n_trees must be >= 1");
  if (max_depth < 1) throw ValidationError("max_depth must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ValidationError("learning_rate must lie in (0, 1]");
  if (min_samples_leaf < 1) throw ValidationError("min_samples_leaf must be >= 1");
}

double Tree::predict(std::span<const double> row) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

double BoostedModel::predict(std::span<const double> row) const {
  double out = base_score;
  for (const auto& t : trees) out += config.learning_rate * t.predict(row);
  return out;
}

namespace {

double sse(std::span<const double> r, std::span<const std::size_t> rows) {
  double sum = 0.0;
  for (auto i : rows) sum += r[i];
  const double mean = sum / static_cast<double>(rows.size());
  double s = 0.0;
  for (auto i : rows) s += (r[i] - mean) * (r[i] - mean);
  return s;
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  std::size_t left_count = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& X, const std::vector<std::vector<std::size_t>>& sorted,
              std::span<const double> residual, const BoostConfig& cfg)
      : X_(X), sorted_(sorted), r_(residual), cfg_(cfg), in_node_(static_cast<std::size_t>(X.rows()), 0) {}

  Tree build(std::vector<std::size_t> rows) {
    Tree tree;
    grow(tree, std::move(rows), 0);
    return tree;
  }

 private:
  int grow(Tree& tree, std::vector<std::size_t> rows, std::size_t depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sum = 0.0;
    for (auto i : rows) sum += r_[i];
    tree.nodes.back().value = sum / static_cast<double>(rows.size());

    if (depth >= cfg_.max_depth || rows.size() < 2 * cfg_.min_samples_leaf) return id;
    const Split s = best_split(rows);
    if (s.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : rows) {
      (X_(static_cast<Eigen::Index>(i), s.feature) <= s.threshold ? left : right).push_back(i);
    }
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = s.feature;
    node.threshold = s.threshold;
    node.gain = s.gain;
    const int l = grow(tree, std::move(left), depth + 1);
    const int r = grow(tree, std::move(right), depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    tree.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  // Scans features in index order and thresholds in ascending order, keeping
  // a candidate only if its gain is strictly larger, which implements the
  // lowest-feature-then-lowest-threshold tie rule.
  Split best_split(const std::vector<std::size_t>& rows) {
    for (auto i : rows) in_node_[i] = 1;
    const std::size_t n = rows.size();
    double total = 0.0;
    for (auto i : rows) total += r_[i];
    const double parent = sse(r_, rows);

    Split best;
    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t f = 0; f < sorted_.size(); ++f) {
      order.clear();
      for (auto i : sorted_[f]) {
        if (in_node_[i]) order.push_back(i);
      }
      const auto fe = static_cast<Eigen::Index>(f);
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_sum += r_[order[k]];
        const double xk = X_(static_cast<Eigen::Index>(order[k]), fe);
        const double xn = X_(static_cast<Eigen::Index>(order[k + 1]), fe);
        const std::size_t nl = k + 1;
        const std::size_t nr = n - nl;
        if (xk == xn || nl < cfg_.min_samples_leaf || nr < cfg_.min_samples_leaf) continue;
        // SSE(parent) - SSE(left) - SSE(right) = nl*ml^2 + nr*mr^2 - n*m^2
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - total * total / static_cast<double>(n);
        if (gain > best.gain) {
          best.feature = static_cast<int>(f);
          best.threshold = xk + (xn - xk) / 2.0;
          best.gain = gain;
          best.left_count = nl;
        }
      }
    }
    for (auto i : rows) in_node_[i] = 0;
    // Relative floor: gains at rounding level of the parent loss are noise.
    if (best.feature >= 0 && !(best.gain > parent * 1e-12)) best = Split{};
    if (best.feature >= 0) best.gain = exact_gain(rows, best, parent);
    return best;
  }

  // The incremental formula above suffers cancellation; report the gain as
  // the directly computed difference of node losses.
  double exact_gain(const std::vector<std::size_t>& rows, const Split& s, double parent) const {
    std::vector<std::size_t> left, right;
    for (auto i : rows) {
      (X_(static_cast<Eigen::Index>(i), s.feature) <= s.threshold ? left : right).push_back(i);
    }
    return std::max(0.0, parent - sse(r_, left) - sse(r_, right));
  }

  const Eigen::MatrixXd& X_;
  const std::vector<std::vector<std::size_t>>& sorted_;
  std::span<const double> r_;
  const BoostConfig& cfg_;
  std::vector<char> in_node_;
};

}  // namespace

BoostedModel fit_boosted_trees(const Eigen::MatrixXd& X, std::span<const double> y, const BoostConfig& config,
                               std::uint64_t seed) {
  config.validate();
  const auto T = static_cast<std::size_t>(X.rows());
  const auto N = static_cast<std::size_t>(X.cols());
  if (y.size() != T) throw ValidationError("target length does not match feature rows");
  if (N == 0) throw ValidationError("no features");
  if (T < 2 * config.min_samples_leaf) throw ValidationError("too few rows for min_samples_leaf");
  if (!X.allFinite()) throw ValidationError("feature matrix has missing or non-finite cells");
  for (double v : y) {
    if (!std::isfinite(v)) throw ValidationError("target has missing or non-finite values");
  }

  BoostedModel model;
  model.config = config;
  model.seed = seed;
  model.n_features = N;
  model.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(T);
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) return model;

  std::vector<std::vector<std::size_t>> sorted(N, std::vector<std::size_t>(T));
  for (std::size_t f = 0; f < N; ++f) {
    auto& idx = sorted[f];
    std::iota(idx.begin(), idx.end(), 0);
    const auto fe = static_cast<Eigen::Index>(f);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
      return X(static_cast<Eigen::Index>(a), fe) < X(static_cast<Eigen::Index>(b), fe);
    });
  }

  std::vector<double> residual(T);
  for (std::size_t i = 0; i < T; ++i) residual[i] = y[i] - model.base_score;
  std::vector<std::size_t> all(T);
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> row(N);

  for (std::size_t k = 0; k < config.n_trees; ++k) {
    TreeBuilder builder(X, sorted, residual, config);
    Tree tree = builder.build(all);
    if (tree.nodes.size() == 1) break;

    double before = 0.0, after = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t f = 0; f < N; ++f) row[f] = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
      const double fit = tree.predict(row);
      before += residual[i] * residual[i];
      after += (residual[i] - fit) * (residual[i] - fit);
      residual[i] -= config.learning_rate * fit;
    }
    model.sse_before.push_back(before);
    model.sse_after.push_back(after);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

GainReport gain_importance(const BoostedModel& model) {
  GainReport out;
  out.importance.assign(model.n_features, 0.0);
  for (const auto& t : model.trees) {
    for (const auto& n : t.nodes) {
      if (!n.is_leaf()) out.importance[static_cast<std::size_t>(n.feature)] += n.gain;
    }
  }
  const double total = std::accumulate(out.importance.begin(), out.importance.end(), 0.0);
  out.normalized.assign(model.n_features, 0.0);
  if (total > 0.0) {
    for (std::size_t f = 0; f < model.n_features; ++f) out.normalized[f] = out.importance[f] / total;
  }
  return out;
}

}  // namespace alphappo::boost
