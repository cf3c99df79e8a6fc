#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "alphappo/alpha_dsl.hpp"
#include "alphappo/boost_fi.hpp"

// Alpha subset strategies: low-correlation filtering, top-k gain importance,
// and seeded random sampling.
namespace alphappo::selection {

enum class Method { All, LowCorrelation, HighContribution, Random };

std::string method_name(Method m);

struct SelectionResult {
  Method method = Method::All;
  std::vector<std::string> kept;
  std::vector<DroppedAlpha> dropped;
};

/// Pearson correlation of standardized columns over jointly valid training
/// rows. Undefined entries (fewer than 3 rows, zero variance) are NaN; the
/// diagonal is 1.
Eigen::MatrixXd correlation_matrix(const AlphaMatrix& matrix);

/// Scans alphas in matrix order and drops any whose |corr| with an already
/// kept alpha is strictly greater than `threshold`.
SelectionResult select_low_correlation(const AlphaMatrix& matrix, double threshold = 0.7);

/// Top-k alphas by gain importance; ties keep the earlier alpha.
SelectionResult select_high_contribution(const std::vector<std::string>& names, const boost::GainReport& report,
                                         std::size_t k = 10);

/// Uniform sample of k names without replacement, returned in original order.
SelectionResult select_random(const std::vector<std::string>& names, std::size_t k, std::uint64_t seed);

/// Keeps every name.
SelectionResult select_all(const std::vector<std::string>& names);

}  // namespace alphappo::selection
