#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "alphappo/common.hpp"

// Gradient-boosted regression trees on squared loss, kept small enough that
// every split's loss reduction is auditable. Only gain importance is exposed.
namespace alphappo::boost {

struct BoostConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 3;
  double learning_rate = 0.1;
  std::size_t min_samples_leaf = 5;

  void validate() const;
};

struct TreeNode {
  // Internal nodes: rows with x[feature] <= threshold go left.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  /// Leaf output (mean residual of the rows reaching it).
  double value = 0.0;
  /// Squared-error reduction achieved by this split (0 for leaves).
  double gain = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
};

struct BoostedModel {
  BoostConfig config;
  std::uint64_t seed = 0;
  std::size_t n_features = 0;
  double base_score = 0.0;
  std::vector<Tree> trees;
  /// Per tree: squared error of the residual target entering the tree, and
  /// after subtracting the tree's full (unshrunk) fit.
  std::vector<double> sse_before;
  std::vector<double> sse_after;

  double predict(std::span<const double> row) const;
};

/// Exact greedy CART boosting. Candidate thresholds are midpoints between
/// consecutive distinct values; equal gains go to the lowest feature index,
/// then the lowest threshold. A node splits only when both children keep
/// min_samples_leaf rows and the gain is strictly positive. Boosting stops
/// early once a tree cannot split (its residual target is then constant).
/// `seed` is recorded for provenance; fitting itself is deterministic.
/// Throws ValidationError on missing cells or too few rows.
BoostedModel fit_boosted_trees(const Eigen::MatrixXd& X, std::span<const double> y, const BoostConfig& config,
                               std::uint64_t seed = 0);

struct GainReport {
  std::vector<double> importance;
  std::vector<double> normalized;
};

/// Per-feature sum of split gains over every tree.
GainReport gain_importance(const BoostedModel& model);

}  // namespace alphappo::boost
