#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "alphappo/common.hpp"

namespace alphappo {

/// Calendar date, parsed from and printed as ISO-8601 YYYY-MM-DD.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days days) : days_(days) {}

  /// Throws ValidationError on anything that is not a valid YYYY-MM-DD date.
  static Date parse(std::string_view text);
  std::string iso() const;

  std::chrono::sys_days days() const { return days_; }
  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days days_{};
};

// Identifiers of the core columns. The alpha corpus also uses Close_t for the
// close price, which the feature pipeline adds as an alias of C_t.
inline constexpr std::string_view kOpen = "O_t";
inline constexpr std::string_view kHigh = "High_t";
inline constexpr std::string_view kLow = "Low_t";
inline constexpr std::string_view kClose = "C_t";
inline constexpr std::string_view kVolume = "V_t";
inline constexpr std::string_view kCloseAlias = "Close_t";
inline constexpr std::string_view kFutureReturn = "future_return";

/// Date-indexed table of named real series. Columns keep insertion order.
class FeatureFrame {
 public:
  FeatureFrame() = default;
  explicit FeatureFrame(std::vector<Date> dates);

  std::size_t rows() const { return dates_.size(); }
  const std::vector<Date>& dates() const { return dates_; }
  const std::vector<std::string>& names() const { return names_; }

  bool has(std::string_view name) const;
  const Series& column(std::string_view name) const;

  /// Appends a new column; throws on duplicate identifier or length mismatch.
  void add(std::string name, Series values);
  /// Adds the column or replaces an existing one with the same identifier.
  void set(std::string name, Series values);

  /// Rows [begin, end) with every column.
  FeatureFrame slice(std::size_t begin, std::size_t end) const;

  /// Per-column mask of valid (non-missing) cells.
  std::vector<bool> valid_mask(std::string_view name) const;

  friend bool operator==(const FeatureFrame& a, const FeatureFrame& b);

 private:
  std::vector<Date> dates_;
  std::vector<std::string> names_;
  std::vector<Series> columns_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Header names of the core CSV columns. Matching is case-insensitive.
struct CsvSchema {
  std::string date = "date";
  std::string open = "open";
  std::string high = "high";
  std::string low = "low";
  std::string close = "close";
  std::string volume = "volume";
};

/// Reads a UTF-8 comma-separated file with a header row. Core columns are
/// renamed to O_t, High_t, Low_t, C_t, V_t; any other column passes through
/// under its header name (empty cells become missing). Rows are sorted by
/// date. Throws ParseError (with line number) or ValidationError.
FeatureFrame load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
FeatureFrame parse_csv(std::string_view text, const CsvSchema& schema = {},
                       std::string_view source = "<memory>");

/// Writes every column of the frame, `date` first. Missing cells are empty.
void write_csv(const FeatureFrame& frame, const std::filesystem::path& path);
std::string to_csv(const FeatureFrame& frame);

/// Adds `future_return` = (C_{t+1} - C_t) / C_t, missing on the last row.
FeatureFrame compute_future_return(const FeatureFrame& frame);

struct DerivedRiskColumns {
  Series ma20;
  Series ma100;
  Series regime;  // 1 when ma20 > ma100, 0 otherwise, missing during warm-up
  Series sigma_daily;
  Series sigma_annual;
  Series tau_upper;
  Series tau_lower;
  /// Set when the frame is shorter than the longest window.
  bool insufficient_history = false;
};

struct RiskWindows {
  std::size_t fast_ma = 20;
  std::size_t slow_ma = 100;
  std::size_t vol = 63;
  std::size_t quantile = 126;
  double upper_q = 0.75;
  double lower_q = 0.25;
  double periods_per_year = 252.0;
};

DerivedRiskColumns compute_risk_columns(const FeatureFrame& frame, const RiskWindows& windows = {});

/// Stores the risk columns as MA_20, MA_100, regime, sigma_daily,
/// sigma_annual, tau_upper, tau_lower.
void attach_risk_columns(FeatureFrame& frame, const DerivedRiskColumns& risk);

struct SplitSpec {
  double train_fraction = 0.8;

  /// floor(train_fraction * rows)
  std::size_t boundary(std::size_t rows) const;
};

/// Chronological partition at SplitSpec::boundary. No shuffling.
std::pair<FeatureFrame, FeatureFrame> split(const FeatureFrame& frame, const SplitSpec& spec);

}  // namespace alphappo
