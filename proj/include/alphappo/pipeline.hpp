#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "alphappo/alpha_dsl.hpp"
#include "alphappo/boost_fi.hpp"
#include "alphappo/market_data.hpp"
#include "alphappo/ppo.hpp"
#include "alphappo/selection.hpp"
#include "alphappo/trading_env.hpp"
#include "json.hpp"

// End-to-end runs: data -> features -> alphas -> metrics/selection -> PPO ->
// backtest, driven by a JSON RunConfig and writing JSON/CSV artifacts.
namespace alphappo::pipeline {

struct SelectionConfig {
  selection::Method method = selection::Method::All;
  double threshold = 0.7;
  std::size_t k = 10;
  std::uint64_t seed = 0;
};

struct BenchmarkConfig {
  std::filesystem::path path;
  std::string column = "close";
};

struct RunConfig {
  std::filesystem::path data_path;
  CsvSchema csv;
  std::optional<std::filesystem::path> alpha_file;  // built-in corpus when empty
  std::optional<BenchmarkConfig> benchmark;
  double train_fraction = 0.8;
  SelectionConfig selection;
  boost::BoostConfig boost;
  std::uint64_t boost_seed = 0;
  std::size_t mi_bins = 16;
  env::EnvConfig env;
  ppo::PpoConfig ppo;
  std::size_t eval_runs = 10;
  std::uint64_t eval_seed = 1000;  // stochastic run i uses eval_seed + i
  std::filesystem::path output_dir = "out";

  /// Checks ranges and, when `check_paths`, that the referenced files exist.
  void validate(bool check_paths = true) const;
};

/// Relative paths are resolved against `base_dir`. Unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string code_version();

/// Close_t alias, indicator columns, future_return and the risk columns.
FeatureFrame build_features(const FeatureFrame& raw, const env::EnvConfig& env);

/// Index of the first non-missing row per column (rows() when never valid).
nlohmann::json warmup_report(const FeatureFrame& frame);

std::string read_alpha_text(const RunConfig& config);

struct AlphaSet {
  std::size_t input_count = 0;
  std::vector<AlphaExpr> exprs;  // parallel to matrix.names
  AlphaMatrix matrix;
  /// Unresolved alphas plus those build_matrix dropped.
  std::vector<DroppedAlpha> dropped;
};

/// Alphas naming a column the frame lacks are dropped as unresolved instead of
/// aborting, so reports always account for every input.
AlphaSet build_alpha_set(const std::vector<AlphaExpr>& exprs, const FeatureFrame& frame, std::size_t train_rows);

struct AlphaMetricRow {
  std::string name;
  std::optional<double> ic;
  double mi = 0.0;
  double gain = 0.0;
  double gain_normalized = 0.0;
};

struct AlphaEvaluation {
  std::vector<AlphaMetricRow> rows;
  boost::GainReport gain;
  std::size_t fit_rows = 0;  // rows used by the boosted model
  std::size_t n_trees = 0;
};

/// IC and MI per alpha on its own valid training rows; gain importance from
/// boosted trees fit on the training rows where every alpha is valid. Only rows
/// [0, matrix.train_rows) are read.
AlphaEvaluation evaluate_alphas(const AlphaMatrix& matrix, const FeatureFrame& frame, const RunConfig& config);

selection::SelectionResult select_alphas(const AlphaMatrix& matrix, const AlphaEvaluation& evaluation,
                                         const SelectionConfig& config);

/// Everything fitted from the training split. Features are recomputed from
/// the training rows alone, so nothing after the split can influence it.
struct TrainingContext {
  FeatureFrame raw;
  std::size_t boundary = 0;
  std::string train_data_sha256;
  std::string alpha_text;
  FeatureFrame train_frame;
  AlphaSet alphas;
  AlphaEvaluation evaluation;
  selection::SelectionResult selection;
  AlphaMatrix selected;
};

TrainingContext prepare_training(const RunConfig& config);

struct Checkpoint {
  nlohmann::json json;
  std::string text;  // serialized bytes
  std::string sha256;
};

/// Trains PPO on the training context and packages the checkpoint.
Checkpoint train_checkpoint(const RunConfig& config, const TrainingContext& ctx, ppo::TrainingResult* out = nullptr);

struct BacktestSet {
  ppo::EvaluationSummary stochastic;
  ppo::EvaluationSummary deterministic;
  env::BacktestReport equal_weighted;
  std::optional<double> benchmark_return;
  double asset_buy_and_hold = 0.0;
  std::string first_date, last_date;
};

BacktestSet run_backtests(const RunConfig& config, const nlohmann::json& checkpoint);

/// Buy-and-hold return of a benchmark close series between two dates.
double benchmark_return(const std::filesystem::path& csv, const std::string& column, const Date& from, const Date& to);

/// Subcommands. Each returns the paths it wrote.
std::vector<std::filesystem::path> cmd_features(const RunConfig& config);
std::vector<std::filesystem::path> cmd_eval_alphas(const RunConfig& config);
std::vector<std::filesystem::path> cmd_select(const RunConfig& config);
std::vector<std::filesystem::path> cmd_train(const RunConfig& config);
std::vector<std::filesystem::path> cmd_backtest(const RunConfig& config,
                                                const std::optional<std::filesystem::path>& checkpoint);
/// Text summary of whatever artifacts exist in output_dir.
std::string cmd_report(const RunConfig& config);

}  // namespace alphappo::pipeline
