#include "alphappo/trading_env.hpp"

#include <algorithm>
#include <cmath>

#include "alphappo/metrics.hpp"
#include "alphappo/rolling.hpp"

namespace alphappo::env {

std::string to_string(ThresholdMode m) {
  return m == ThresholdMode::PriceQuantile ? "price_quantile" : "alpha_quantile";
}

ThresholdMode threshold_mode_from_string(const std::string& s) {
  if (s == "price_quantile") return ThresholdMode::PriceQuantile;
  if (s == "alpha_quantile") return ThresholdMode::AlphaQuantile;
  throw ValidationError("unknown threshold_mode '" + s + "' (expected price_quantile or alpha_quantile)");
}

void EnvConfig::validate() const {
  if (!(sigma_target > 0.0)) throw ValidationError("sigma_target must be > 0");
  if (!(lambda_cost >= 0.0)) throw ValidationError("lambda_cost must be >= 0");
  if (!(v_max >= 1.0)) throw ValidationError("v_max must be >= 1");
  if (quantile_window < 1) throw ValidationError("quantile_window must be >= 1");
  if (vol_window < 2) throw ValidationError("vol_window must be >= 2");
  if (!(lower_quantile <= upper_quantile && lower_quantile >= 0.0 && upper_quantile <= 1.0)) {
    throw ValidationError("quantiles must satisfy 0 <= lower <= upper <= 1");
  }
}

void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = nlohmann::json{{"sigma_target", c.sigma_target},     {"lambda_cost", c.lambda_cost},
                     {"v_max", c.v_max},                   {"quantile_window", c.quantile_window},
                     {"vol_window", c.vol_window},         {"upper_quantile", c.upper_quantile},
                     {"lower_quantile", c.lower_quantile}, {"threshold_mode", to_string(c.threshold_mode)}};
}

void from_json(const nlohmann::json& j, EnvConfig& c) {
  c = EnvConfig{};
  c.sigma_target = j.value("sigma_target", c.sigma_target);
  c.lambda_cost = j.value("lambda_cost", c.lambda_cost);
  c.v_max = j.value("v_max", c.v_max);
  c.quantile_window = j.value("quantile_window", c.quantile_window);
  c.vol_window = j.value("vol_window", c.vol_window);
  c.upper_quantile = j.value("upper_quantile", c.upper_quantile);
  c.lower_quantile = j.value("lower_quantile", c.lower_quantile);
  if (j.contains("threshold_mode")) c.threshold_mode = threshold_mode_from_string(j.at("threshold_mode"));
  c.validate();
}

WeightVector normalize_weights(std::span<const double> raw) {
  if (raw.empty()) throw ValidationError("weight vector is empty");
  WeightVector w;
  w.raw.assign(raw.begin(), raw.end());
  w.clipped.resize(raw.size());
  double l1 = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) throw ValidationError("non-finite weight at index " + std::to_string(i));
    w.clipped[i] = std::clamp(raw[i], -1.0, 1.0);
    l1 += std::abs(w.clipped[i]);
  }
  w.normalized.resize(raw.size());
  const double denom = l1 + kWeightEpsilon;
  for (std::size_t i = 0; i < raw.size(); ++i) w.normalized[i] = w.clipped[i] / denom;
  return w;
}

double composite_alpha(const WeightVector& weights, std::span<const double> alphas) {
  if (alphas.size() != weights.normalized.size()) {
    throw ValidationError("composite alpha: " + std::to_string(weights.normalized.size()) + " weights for " +
                          std::to_string(alphas.size()) + " alphas");
  }
  double c = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) c += weights.normalized[i] * alphas[i];
  return c;
}

double volatility_scale(double sigma_annual, const EnvConfig& config) {
  if (!(sigma_annual > 0.0)) return config.v_max;
  return std::min(config.v_max, config.sigma_target / sigma_annual);
}

double size_position(double composite, double tau_upper, double tau_lower, int regime, double sigma_annual,
                     const EnvConfig& config) {
  double base = 0.0;
  if (composite > tau_upper) {
    base = std::min(1.0, 2.0 * (composite - tau_upper));
  } else if (composite < tau_lower) {
    base = std::max(-1.0, 2.0 * (composite - tau_lower));
  }
  if (regime == 0 && base > 0.0) base = 0.0;
  return base * volatility_scale(sigma_annual, config);
}

StepResult execute_step(const WeightVector& weights, const MarketRow& row, Ledger& ledger, const EnvConfig& config) {
  StepResult r;
  r.composite_alpha = composite_alpha(weights, row.alphas);
  r.tau_upper = row.tau_upper;
  r.tau_lower = row.tau_lower;
  r.position = size_position(r.composite_alpha, row.tau_upper, row.tau_lower, row.regime, row.sigma_annual, config);
  r.cost = config.lambda_cost * std::abs(r.position - ledger.position);
  r.future_return = row.future_return;
  r.reward = r.position * row.future_return - r.cost;
  ledger.value *= 1.0 + r.reward;
  ledger.peak = std::max(ledger.peak, ledger.value);
  ledger.position = r.position;
  r.portfolio_value = ledger.value;
  r.drawdown = (ledger.value - ledger.peak) / ledger.peak;
  return r;
}

std::array<double, kObservationDim> EnvState::observation() const {
  return {ohlcv[0], ohlcv[1], ohlcv[2], ohlcv[3], ohlcv[4], prev_position, regime, sigma_daily};
}

TradingEnv::TradingEnv(const AlphaMatrix& matrix, const FeatureFrame& frame, EnvConfig config, std::size_t begin,
                       std::size_t end)
    : matrix_(matrix), frame_(frame), config_(config) {
  config_.validate();
  if (matrix.rows() != frame.rows() || matrix.dates != frame.dates()) {
    throw ValidationError("alpha matrix and feature frame are not aligned on dates");
  }
  open_ = &frame.column(kOpen);
  high_ = &frame.column(kHigh);
  low_ = &frame.column(kLow);
  close_ = &frame.column(kClose);
  volume_ = &frame.column(kVolume);
  future_return_ = &frame.column(kFutureReturn);
  regime_ = &frame.column("regime");
  sigma_daily_ = &frame.column("sigma_daily");
  sigma_annual_ = &frame.column("sigma_annual");
  if (config_.threshold_mode == ThresholdMode::PriceQuantile) {
    tau_upper_ = &frame.column("tau_upper");
    tau_lower_ = &frame.column("tau_lower");
  }

  end = std::min(end, frame.rows());
  std::size_t first = begin;
  while (first < end && !row_ready(first)) ++first;
  std::size_t last = end;
  while (last > first && is_missing((*future_return_)[last - 1])) --last;
  if (first >= end || last <= first) {
    throw ValidationError("no tradable rows: every row in range lacks a required input (warm-up longer than data?)");
  }
  first_ = first;
  last_ = last - 1;
  alpha_buf_.resize(matrix.cols());
}

bool TradingEnv::row_ready(std::size_t row) const { return first_missing(row).empty(); }

std::string TradingEnv::first_missing(std::size_t row) const {
  const std::array<std::pair<const char*, const Series*>, 9> cols = {{{"O_t", open_},
                                                                      {"High_t", high_},
                                                                      {"Low_t", low_},
                                                                      {"C_t", close_},
                                                                      {"V_t", volume_},
                                                                      {"future_return", future_return_},
                                                                      {"regime", regime_},
                                                                      {"sigma_daily", sigma_daily_},
                                                                      {"sigma_annual", sigma_annual_}}};
  for (const auto& [name, s] : cols) {
    if (is_missing((*s)[row])) return name;
  }
  if (config_.threshold_mode == ThresholdMode::PriceQuantile) {
    if (is_missing((*tau_upper_)[row])) return "tau_upper";
    if (is_missing((*tau_lower_)[row])) return "tau_lower";
  }
  for (std::size_t j = 0; j < matrix_.cols(); ++j) {
    if (!matrix_.valid(row, j)) return matrix_.names[j];
  }
  if (config_.threshold_mode == ThresholdMode::AlphaQuantile) {
    const std::size_t w = config_.quantile_window;
    if (row + 1 < w) return "alpha threshold history";
    for (std::size_t s = row + 1 - w; s < row; ++s) {
      if (!matrix_.row_valid(s)) return "alpha threshold history";
    }
  }
  return {};
}

EnvState TradingEnv::state_at(std::size_t row, double prev_position) const {
  EnvState s;
  s.ohlcv = {(*open_)[row], (*high_)[row], (*low_)[row], (*close_)[row], (*volume_)[row]};
  s.prev_position = prev_position;
  s.regime = (*regime_)[row];
  s.sigma_daily = (*sigma_daily_)[row];
  return s;
}

EnvState TradingEnv::reset() {
  row_ = first_;
  ledger_ = Ledger{};
  state_ = state_at(row_, 0.0);
  finished_ = false;
  return state_;
}

MarketRow TradingEnv::market_row(std::size_t row, const WeightVector& w, std::vector<double>& alpha_buf) const {
  if (auto missing = first_missing(row); !missing.empty()) {
    throw ValidationError("missing required input '" + missing + "' at " + frame_.dates()[row].iso());
  }
  const auto& z = matrix_.standardized;
  const auto r = static_cast<Eigen::Index>(row);
  for (std::size_t j = 0; j < alpha_buf.size(); ++j) alpha_buf[j] = z(r, static_cast<Eigen::Index>(j));

  MarketRow m;
  m.alphas = alpha_buf;
  m.regime = (*regime_)[row] != 0.0 ? 1 : 0;
  m.sigma_annual = (*sigma_annual_)[row];
  m.future_return = (*future_return_)[row];
  if (config_.threshold_mode == ThresholdMode::PriceQuantile) {
    m.tau_upper = (*tau_upper_)[row];
    m.tau_lower = (*tau_lower_)[row];
  } else {
    const std::size_t win = config_.quantile_window;
    const Eigen::Map<const Eigen::VectorXd> weights(w.normalized.data(), static_cast<Eigen::Index>(w.normalized.size()));
    const Eigen::VectorXd history =
        z.middleRows(static_cast<Eigen::Index>(row + 1 - win), static_cast<Eigen::Index>(win)) * weights;
    const std::span<const double> h(history.data(), win);
    m.tau_upper = rolling::sample_quantile(h, config_.upper_quantile);
    m.tau_lower = rolling::sample_quantile(h, config_.lower_quantile);
  }
  return m;
}

TradingEnv::Outcome TradingEnv::step(std::span<const double> raw_weights) {
  if (finished_) throw ValidationError("step() called on a finished episode; call reset()");
  if (raw_weights.size() != action_dim()) {
    throw ValidationError("action has " + std::to_string(raw_weights.size()) + " weights, environment expects " +
                          std::to_string(action_dim()));
  }
  const auto w = normalize_weights(raw_weights);
  const auto market = market_row(row_, w, alpha_buf_);
  Outcome out;
  out.result = execute_step(w, market, ledger_, config_);
  out.result.date = frame_.dates()[row_];
  out.done = row_ == last_;
  if (out.done) {
    finished_ = true;
    out.next = state_;
    out.next.prev_position = ledger_.position;
  } else {
    ++row_;
    state_ = state_at(row_, ledger_.position);
    out.next = state_;
  }
  return out;
}

BacktestSummary summarize(std::span<const StepResult> steps) {
  BacktestSummary s;
  s.n_steps = steps.size();
  if (steps.empty()) return s;
  std::vector<double> rewards;
  std::vector<double> values{1.0};
  for (const auto& st : steps) {
    rewards.push_back(st.reward);
    values.push_back(st.portfolio_value);
  }
  s.cum_return = metrics::cumulative_return(rewards);
  if (rewards.size() >= 2) s.sharpe = metrics::sharpe_ratio(rewards);
  s.max_drawdown = metrics::max_drawdown(values);
  s.mean_reward = rolling::sample_mean(rewards);
  s.final_value = values.back();
  return s;
}

BacktestReport run_backtest(const Policy& policy, const AlphaMatrix& matrix, const FeatureFrame& frame,
                            const EnvConfig& config, std::size_t begin, std::size_t end) {
  TradingEnv env(matrix, frame, config, begin, end);
  BacktestReport report;
  report.config = config;
  auto state = env.reset();
  for (;;) {
    const auto raw = policy(state, env.current_row());
    auto out = env.step(raw);
    report.steps.push_back(out.result);
    if (out.done) break;
    state = out.next;
  }
  report.summary = summarize(report.steps);
  return report;
}

BacktestReport run_equal_weighted(const AlphaMatrix& matrix, const FeatureFrame& frame, const EnvConfig& config,
                                  std::size_t begin, std::size_t end) {
  const std::vector<double> uniform(matrix.cols(), 1.0 / static_cast<double>(matrix.cols()));
  return run_backtest([&](const EnvState&, std::size_t) { return uniform; }, matrix, frame, config, begin, end);
}

nlohmann::json to_json(const BacktestReport& report) {
  nlohmann::json summary = {{"n_steps", report.summary.n_steps},
                            {"cum_return", report.summary.cum_return},
                            {"sharpe", report.summary.sharpe ? nlohmann::json(*report.summary.sharpe) : nlohmann::json()},
                            {"max_drawdown", report.summary.max_drawdown},
                            {"mean_reward", report.summary.mean_reward},
                            {"final_value", report.summary.final_value},
                            {"config", report.config}};
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : report.steps) {
    steps.push_back({{"date", s.date.iso()},
                     {"position", s.position},
                     {"composite", s.composite_alpha},
                     {"tau_upper", s.tau_upper},
                     {"tau_lower", s.tau_lower},
                     {"future_return", s.future_return},
                     {"reward", s.reward},
                     {"cost", s.cost},
                     {"value", s.portfolio_value},
                     {"drawdown", s.drawdown}});
  }
  return {{"summary", summary}, {"steps", steps}};
}

}  // namespace alphappo::env
