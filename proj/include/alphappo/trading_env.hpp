#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alphappo/alpha_dsl.hpp"
#include "alphappo/market_data.hpp"
#include "json.hpp"

namespace alphappo::env {

/// Where the entry/exit thresholds come from.
///  - PriceQuantile: rolling quantiles of the close price (tau_upper/tau_lower
///    columns of the frame).
///  - AlphaQuantile: rolling quantiles of the composite signal itself, i.e. of
///    sum_i w_t[i] alpha_{i,s} for the trailing `quantile_window` rows s <= t,
///    evaluated with the current step's weights.
enum class ThresholdMode { PriceQuantile, AlphaQuantile };

std::string to_string(ThresholdMode m);
ThresholdMode threshold_mode_from_string(const std::string& s);

struct EnvConfig {
  double sigma_target = 0.15;
  double lambda_cost = 0.001;
  double v_max = 2.0;
  std::size_t quantile_window = 126;
  std::size_t vol_window = 63;
  double upper_quantile = 0.75;
  double lower_quantile = 0.25;
  ThresholdMode threshold_mode = ThresholdMode::AlphaQuantile;

  void validate() const;
};

void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);

inline constexpr double kWeightEpsilon = 1e-8;

struct WeightVector {
  std::vector<double> raw;
  std::vector<double> clipped;     // clamp(raw, -1, 1)
  std::vector<double> normalized;  // clipped / (||clipped||_1 + 1e-8)
};

/// Throws ValidationError on an empty or non-finite input.
WeightVector normalize_weights(std::span<const double> raw);

/// sum_i normalized_i * alpha_i
double composite_alpha(const WeightVector& weights, std::span<const double> alphas);

/// min(v_max, sigma_target / sigma_annual); v_max when sigma_annual is 0.
double volatility_scale(double sigma_annual, const EnvConfig& config);

/// Threshold position (clamped to [-1, 1]), with longs zeroed when regime is
/// 0, then multiplied by the volatility scale.
double size_position(double composite, double tau_upper, double tau_lower, int regime, double sigma_annual,
                     const EnvConfig& config);

inline constexpr std::size_t kObservationDim = 8;

struct EnvState {
  std::array<double, 5> ohlcv{};  // O, H, L, C, V at t
  double prev_position = 0.0;
  double regime = 0.0;
  double sigma_daily = 0.0;

  std::array<double, kObservationDim> observation() const;
};

/// Everything the trade at one row needs besides the weights.
struct MarketRow {
  std::span<const double> alphas;  // standardized, one per alpha
  double tau_upper = 0.0;
  double tau_lower = 0.0;
  int regime = 0;
  double sigma_annual = 0.0;
  double future_return = 0.0;
};

/// Running portfolio accounting (V starts at 1, peak at 1, flat book).
struct Ledger {
  double value = 1.0;
  double peak = 1.0;
  double position = 0.0;
};

struct StepResult {
  Date date;
  double composite_alpha = 0.0;
  double tau_upper = 0.0;
  double tau_lower = 0.0;
  double position = 0.0;
  double cost = 0.0;
  double future_return = 0.0;
  double reward = 0.0;
  double portfolio_value = 1.0;
  double drawdown = 0.0;
};

/// One trade: composite -> position -> cost -> reward -> value/peak/drawdown.
/// `ledger` is advanced in place.
StepResult execute_step(const WeightVector& weights, const MarketRow& row, Ledger& ledger, const EnvConfig& config);

/// Sequential environment over rows [begin, end) of a frame carrying OHLCV,
/// future_return, regime, sigma_daily, sigma_annual (and tau_upper/tau_lower in
/// price mode), aligned row-for-row with an alpha matrix. Rows before `begin`
/// may serve as threshold history. Decisions run from the first row where
/// every input is defined to the last row < end with a known future return.
class TradingEnv {
 public:
  TradingEnv(const AlphaMatrix& matrix, const FeatureFrame& frame, EnvConfig config, std::size_t begin = 0,
             std::size_t end = std::numeric_limits<std::size_t>::max());

  std::size_t action_dim() const { return matrix_.cols(); }
  std::size_t first_row() const { return first_; }
  /// One past the last decision row.
  std::size_t end_row() const { return last_ + 1; }
  std::size_t episode_length() const { return last_ + 1 - first_; }
  const EnvConfig& config() const { return config_; }
  const AlphaMatrix& matrix() const { return matrix_; }
  const FeatureFrame& frame() const { return frame_; }

  EnvState reset();
  std::size_t current_row() const { return row_; }
  const EnvState& state() const { return state_; }

  struct Outcome {
    StepResult result;
    EnvState next;
    bool done = false;
  };
  Outcome step(std::span<const double> raw_weights);

  /// Observation at `row` with the given previous position.
  EnvState state_at(std::size_t row, double prev_position) const;

 private:
  MarketRow market_row(std::size_t row, const WeightVector& w, std::vector<double>& alpha_buf) const;
  bool row_ready(std::size_t row) const;
  std::string first_missing(std::size_t row) const;

  const AlphaMatrix& matrix_;
  const FeatureFrame& frame_;
  EnvConfig config_;
  const Series* open_;
  const Series* high_;
  const Series* low_;
  const Series* close_;
  const Series* volume_;
  const Series* future_return_;
  const Series* regime_;
  const Series* sigma_daily_;
  const Series* sigma_annual_;
  const Series* tau_upper_ = nullptr;
  const Series* tau_lower_ = nullptr;
  std::size_t first_ = 0;
  std::size_t last_ = 0;

  std::size_t row_ = 0;
  EnvState state_;
  Ledger ledger_;
  bool finished_ = true;
  std::vector<double> alpha_buf_;
};

struct BacktestSummary {
  std::size_t n_steps = 0;
  double cum_return = 0.0;
  std::optional<double> sharpe;
  double max_drawdown = 0.0;
  double mean_reward = 0.0;
  double final_value = 1.0;
};

struct BacktestReport {
  EnvConfig config;
  std::vector<StepResult> steps;
  BacktestSummary summary;
};

/// Maps the state at a row to raw (unnormalized) weights.
using Policy = std::function<std::vector<double>(const EnvState& state, std::size_t row)>;

/// Runs one full pass of the environment and summarizes it with the metrics
/// module (Sharpe on per-step rewards, drawdown on [1, V_1, ..., V_T]).
BacktestReport run_backtest(const Policy& policy, const AlphaMatrix& matrix, const FeatureFrame& frame,
                            const EnvConfig& config, std::size_t begin = 0,
                            std::size_t end = std::numeric_limits<std::size_t>::max());

/// Fixed raw weights 1/N at every step.
BacktestReport run_equal_weighted(const AlphaMatrix& matrix, const FeatureFrame& frame, const EnvConfig& config,
                                  std::size_t begin = 0, std::size_t end = std::numeric_limits<std::size_t>::max());

BacktestSummary summarize(std::span<const StepResult> steps);

nlohmann::json to_json(const BacktestReport& report);

}  // namespace alphappo::env
