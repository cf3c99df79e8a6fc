#include "alphappo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "alphappo/indicators.hpp"
#include "alphappo/metrics.hpp"
#include "alphappo/text_util.hpp"

#ifndef ALPHAPPO_VERSION
#define ALPHAPPO_VERSION "dev"
#endif

namespace alphappo::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

// ------------------------------------------------------------------ config

namespace {

selection::Method method_from_string(const std::string& s) {
  if (s == "all") return selection::Method::All;
  if (s == "low_correlation") return selection::Method::LowCorrelation;
  if (s == "high_contribution") return selection::Method::HighContribution;
  if (s == "random") return selection::Method::Random;
  throw ValidationError("unknown selection method '" + s +
                        "' (expected all, low_correlation, high_contribution or random)");
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

void RunConfig::validate(bool check_paths) const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train_fraction must lie in (0, 1)");
  if (selection.method == selection::Method::LowCorrelation && !(selection.threshold > 0.0 && selection.threshold <= 1.0)) {
    throw ValidationError("selection.threshold must lie in (0, 1]");
  }
  if ((selection.method == selection::Method::HighContribution || selection.method == selection::Method::Random) &&
      selection.k < 1) {
    throw ValidationError("selection.k must be >= 1");
  }
  if (mi_bins < 2) throw ValidationError("mi_bins must be >= 2");
  if (eval_runs < 1) throw ValidationError("eval_runs must be >= 1");
  boost.validate();
  env.validate();
  ppo.validate();
  if (!check_paths) return;
  if (data_path.empty()) throw ValidationError("data_path is required");
  if (!fs::exists(data_path)) throw ValidationError("data file not found: " + data_path.string());
  if (alpha_file && !fs::exists(*alpha_file)) throw ValidationError("alpha file not found: " + alpha_file->string());
  if (benchmark && !fs::exists(benchmark->path)) {
    throw ValidationError("benchmark file not found: " + benchmark->path.string());
  }
}

RunConfig config_from_json(const json& j, const fs::path& base_dir) {
  try {
    reject_unknown(j,
                   {"data_path", "csv_columns", "alpha_file", "benchmark", "train_fraction", "selection", "boost",
                    "mi_bins", "env", "ppo", "eval_runs", "eval_seed", "output_dir"},
                   "config");
    RunConfig c;
    if (j.contains("data_path")) c.data_path = resolve(j.at("data_path").get<std::string>(), base_dir);
    if (j.contains("csv_columns")) {
      const auto& s = j.at("csv_columns");
      reject_unknown(s, {"date", "open", "high", "low", "close", "volume"}, "csv_columns");
      c.csv.date = s.value("date", c.csv.date);
      c.csv.open = s.value("open", c.csv.open);
      c.csv.high = s.value("high", c.csv.high);
      c.csv.low = s.value("low", c.csv.low);
      c.csv.close = s.value("close", c.csv.close);
      c.csv.volume = s.value("volume", c.csv.volume);
    }
    if (j.contains("alpha_file") && !j.at("alpha_file").is_null()) {
      c.alpha_file = resolve(j.at("alpha_file").get<std::string>(), base_dir);
    }
    if (j.contains("benchmark") && !j.at("benchmark").is_null()) {
      const auto& b = j.at("benchmark");
      reject_unknown(b, {"path", "column"}, "benchmark");
      c.benchmark = BenchmarkConfig{resolve(b.at("path").get<std::string>(), base_dir), b.value("column", "close")};
    }
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    if (j.contains("selection")) {
      const auto& s = j.at("selection");
      reject_unknown(s, {"method", "threshold", "k", "seed"}, "selection");
      c.selection.method = method_from_string(s.value("method", "all"));
      c.selection.threshold = s.value("threshold", c.selection.threshold);
      c.selection.k = s.value("k", c.selection.k);
      c.selection.seed = s.value("seed", c.selection.seed);
    }
    if (j.contains("boost")) {
      const auto& b = j.at("boost");
      reject_unknown(b, {"n_trees", "max_depth", "learning_rate", "min_samples_leaf", "seed"}, "boost");
      c.boost.n_trees = b.value("n_trees", c.boost.n_trees);
      c.boost.max_depth = b.value("max_depth", c.boost.max_depth);
      c.boost.learning_rate = b.value("learning_rate", c.boost.learning_rate);
      c.boost.min_samples_leaf = b.value("min_samples_leaf", c.boost.min_samples_leaf);
      c.boost_seed = b.value("seed", c.boost_seed);
    }
    c.mi_bins = j.value("mi_bins", c.mi_bins);
    if (j.contains("env")) c.env = j.at("env").get<env::EnvConfig>();
    if (j.contains("ppo")) c.ppo = j.at("ppo").get<ppo::PpoConfig>();
    c.eval_runs = j.value("eval_runs", c.eval_runs);
    c.eval_seed = j.value("eval_seed", c.eval_seed);
    if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>(), base_dir);
    c.validate(false);
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

json config_to_json(const RunConfig& c) {
  json j{{"data_path", c.data_path.string()},
         {"csv_columns",
          {{"date", c.csv.date},
           {"open", c.csv.open},
           {"high", c.csv.high},
           {"low", c.csv.low},
           {"close", c.csv.close},
           {"volume", c.csv.volume}}},
         {"alpha_file", c.alpha_file ? json(c.alpha_file->string()) : json(nullptr)},
         {"benchmark", c.benchmark ? json{{"path", c.benchmark->path.string()}, {"column", c.benchmark->column}}
                                   : json(nullptr)},
         {"train_fraction", c.train_fraction},
         {"selection",
          {{"method", selection::method_name(c.selection.method)},
           {"threshold", c.selection.threshold},
           {"k", c.selection.k},
           {"seed", c.selection.seed}}},
         {"boost",
          {{"n_trees", c.boost.n_trees},
           {"max_depth", c.boost.max_depth},
           {"learning_rate", c.boost.learning_rate},
           {"min_samples_leaf", c.boost.min_samples_leaf},
           {"seed", c.boost_seed}}},
         {"mi_bins", c.mi_bins},
         {"env", c.env},
         {"ppo", c.ppo},
         {"eval_runs", c.eval_runs},
         {"eval_seed", c.eval_seed},
         {"output_dir", c.output_dir.string()}};
  return j;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace

RunConfig load_config(const fs::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string code_version() { return ALPHAPPO_VERSION; }

// ------------------------------------------------------------------ features

FeatureFrame build_features(const FeatureFrame& raw, const env::EnvConfig& env) {
  FeatureFrame f = raw;
  if (!f.has(kCloseAlias)) f.add(std::string(kCloseAlias), f.column(kClose));
  indicators::attach_standard_indicators(f);
  f = compute_future_return(f);
  RiskWindows w;
  w.quantile = env.quantile_window;
  w.vol = env.vol_window;
  w.upper_q = env.upper_quantile;
  w.lower_q = env.lower_quantile;
  attach_risk_columns(f, compute_risk_columns(f, w));
  return f;
}

json warmup_report(const FeatureFrame& frame) {
  json cols = json::object();
  for (const auto& name : frame.names()) {
    const auto& s = frame.column(name);
    std::size_t first = s.size();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!is_missing(s[i])) {
        first = i;
        break;
      }
    }
    cols[name] = {{"first_valid_row", first},
                  {"first_valid_date", first < s.size() ? json(frame.dates()[first].iso()) : json(nullptr)},
                  {"missing", s.size() - count_valid(s)}};
  }
  return cols;
}

std::string read_alpha_text(const RunConfig& config) {
  return config.alpha_file ? read_file(*config.alpha_file) : std::string(builtin_corpus());
}

// ------------------------------------------------------------------ alphas

AlphaSet build_alpha_set(const std::vector<AlphaExpr>& exprs, const FeatureFrame& frame, std::size_t train_rows) {
  AlphaSet out;
  out.input_count = exprs.size();
  std::vector<AlphaExpr> resolved;
  for (const auto& e : exprs) {
    std::string missing;
    for (const auto& id : identifiers(*e.ast)) {
      if (!frame.has(id)) {
        missing = id;
        break;
      }
    }
    if (missing.empty()) {
      resolved.push_back(e);
    } else {
      out.dropped.push_back({e.name, "unresolved identifier " + missing});
    }
  }
  if (resolved.empty()) throw ValidationError("no alpha resolves against the available columns");
  out.matrix = build_matrix(resolved, frame, train_rows);
  for (const auto& d : out.matrix.dropped) out.dropped.push_back(d);
  for (const auto& name : out.matrix.names) {
    const auto it = std::find_if(resolved.begin(), resolved.end(), [&](const AlphaExpr& e) { return e.name == name; });
    out.exprs.push_back(*it);
  }
  return out;
}

AlphaEvaluation evaluate_alphas(const AlphaMatrix& matrix, const FeatureFrame& frame, const RunConfig& config) {
  const std::size_t n = matrix.train_rows;
  const std::size_t N = matrix.cols();
  const auto& fr = frame.column(kFutureReturn);
  const std::span<const double> target(fr.data(), n);

  AlphaEvaluation out;
  out.rows.resize(N);
  for (std::size_t j = 0; j < N; ++j) {
    auto& row = out.rows[j];
    row.name = matrix.names[j];
    const Eigen::VectorXd col = matrix.standardized.col(static_cast<Eigen::Index>(j)).head(static_cast<Eigen::Index>(n));
    const std::span<const double> x(col.data(), n);
    row.ic = metrics::information_coefficient(x, target);
    std::vector<double> xs, ys;
    for (std::size_t t = 0; t < n; ++t) {
      if (is_missing(x[t]) || is_missing(target[t])) continue;
      xs.push_back(x[t]);
      ys.push_back(target[t]);
    }
    if (xs.size() < config.mi_bins) {
      throw ValidationError("alpha " + row.name + " has " + std::to_string(xs.size()) +
                            " valid training rows, fewer than mi_bins");
    }
    row.mi = metrics::mutual_information(xs, ys, config.mi_bins);
  }

  std::vector<std::size_t> fit;
  for (std::size_t t = 0; t < n; ++t) {
    if (matrix.row_valid(t) && !is_missing(fr[t])) fit.push_back(t);
  }
  if (fit.size() < 2 * config.boost.min_samples_leaf) {
    throw ValidationError("only " + std::to_string(fit.size()) +
                          " training rows have every alpha and the target defined; too few for gain importance");
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(fit.size()), static_cast<Eigen::Index>(N));
  std::vector<double> y(fit.size());
  for (std::size_t i = 0; i < fit.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = matrix.standardized.row(static_cast<Eigen::Index>(fit[i]));
    y[i] = fr[fit[i]];
  }
  const auto model = boost::fit_boosted_trees(X, y, config.boost, config.boost_seed);
  out.gain = boost::gain_importance(model);
  out.fit_rows = fit.size();
  out.n_trees = model.trees.size();
  for (std::size_t j = 0; j < N; ++j) {
    out.rows[j].gain = out.gain.importance[j];
    out.rows[j].gain_normalized = out.gain.normalized[j];
  }
  return out;
}

selection::SelectionResult select_alphas(const AlphaMatrix& matrix, const AlphaEvaluation& evaluation,
                                         const SelectionConfig& config) {
  switch (config.method) {
    case selection::Method::All:
      return selection::select_all(matrix.names);
    case selection::Method::LowCorrelation:
      return selection::select_low_correlation(matrix, config.threshold);
    case selection::Method::HighContribution:
      return selection::select_high_contribution(matrix.names, evaluation.gain, config.k);
    case selection::Method::Random:
      return selection::select_random(matrix.names, config.k, config.seed);
  }
  throw ValidationError("unknown selection method");
}

TrainingContext prepare_training(const RunConfig& config) {
  config.validate(true);
  TrainingContext ctx;
  ctx.raw = load_csv(config.data_path, config.csv);
  ctx.boundary = SplitSpec{config.train_fraction}.boundary(ctx.raw.rows());
  const auto [train_raw, test_raw] = split(ctx.raw, SplitSpec{config.train_fraction});
  ctx.train_data_sha256 = sha256_hex(to_csv(train_raw));
  ctx.alpha_text = read_alpha_text(config);
  const auto exprs = parse_alpha_file(ctx.alpha_text);

  ctx.train_frame = build_features(train_raw, config.env);
  ctx.alphas = build_alpha_set(exprs, ctx.train_frame, ctx.train_frame.rows());
  ctx.evaluation = evaluate_alphas(ctx.alphas.matrix, ctx.train_frame, config);
  ctx.selection = select_alphas(ctx.alphas.matrix, ctx.evaluation, config.selection);
  ctx.selected = ctx.alphas.matrix.subset(ctx.selection.kept);
  return ctx;
}

// ------------------------------------------------------------------ reports

namespace {

json seeds_json(const RunConfig& c) {
  return {{"ppo", c.ppo.seed}, {"selection", c.selection.seed}, {"boost", c.boost_seed}, {"eval", c.eval_seed}};
}

json provenance(const RunConfig& c, const std::string& alpha_text) {
  return {{"code_version", code_version()},
          {"config", config_to_json(c)},
          {"seeds", seeds_json(c)},
          {"corpus_sha256", sha256_hex(alpha_text)}};
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json dropped_json(const std::vector<DroppedAlpha>& dropped) {
  json arr = json::array();
  for (const auto& d : dropped) arr.push_back({{"name", d.name}, {"reason", d.reason}});
  return arr;
}

json selection_json(const selection::SelectionResult& s, const SelectionConfig& cfg) {
  return {{"method", selection::method_name(s.method)},
          {"threshold", cfg.threshold},
          {"k", cfg.k},
          {"seed", cfg.seed},
          {"kept", s.kept},
          {"dropped", dropped_json(s.dropped)}};
}

std::string csv_number(double v) { return is_missing(v) ? "" : text_util::format_double(v); }
std::string csv_number(const std::optional<double>& v) { return v ? text_util::format_double(*v) : ""; }

json stat_json(const ppo::AggregateStat& s) { return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; }

json summary_json(const env::BacktestSummary& s) {
  return {{"n_steps", s.n_steps},
          {"cum_return", s.cum_return},
          {"sharpe", optional_number(s.sharpe)},
          {"max_drawdown", s.max_drawdown},
          {"mean_reward", s.mean_reward},
          {"final_value", s.final_value}};
}

json evaluation_json(const ppo::EvaluationSummary& e) {
  json runs = json::array();
  for (std::size_t i = 0; i < e.runs.size(); ++i) {
    runs.push_back({{"seed", e.seeds[i]}, {"summary", summary_json(e.runs[i].summary)}});
  }
  return {{"deterministic", e.deterministic},
          {"cum_return", stat_json(e.cum_return)},
          {"sharpe", stat_json(e.sharpe)},
          {"max_drawdown", stat_json(e.max_drawdown)},
          {"mean_reward", stat_json(e.mean_reward)},
          {"runs", runs}};
}

std::string ledger_csv(const env::BacktestReport& r) {
  std::string out = "date,composite,tau_upper,tau_lower,position,cost,future_return,reward,value,drawdown\n";
  for (const auto& s : r.steps) {
    out += s.date.iso() + "," + csv_number(s.composite_alpha) + "," + csv_number(s.tau_upper) + "," +
           csv_number(s.tau_lower) + "," + csv_number(s.position) + "," + csv_number(s.cost) + "," +
           csv_number(s.future_return) + "," + csv_number(s.reward) + "," + csv_number(s.portfolio_value) + "," +
           csv_number(s.drawdown) + "\n";
  }
  return out;
}

}  // namespace

// ------------------------------------------------------------------ training

Checkpoint train_checkpoint(const RunConfig& config, const TrainingContext& ctx, ppo::TrainingResult* out) {
  env::TradingEnv environment(ctx.selected, ctx.train_frame, config.env);
  ppo::TrainingResult result = ppo::train(environment, config.ppo);

  json alphas = json::array();
  for (std::size_t j = 0; j < ctx.selected.cols(); ++j) {
    const auto& name = ctx.selected.names[j];
    const auto& expr = ctx.alphas.exprs[ctx.alphas.matrix.index_of(name)];
    alphas.push_back({{"name", name},
                      {"expression", render(*expr.ast)},
                      {"fit_mean", ctx.selected.fit_mean[j]},
                      {"fit_std", ctx.selected.fit_std[j]}});
  }
  Checkpoint cp;
  cp.json = {{"format", "alphappo-checkpoint"},
             {"format_version", 1},
             {"provenance", provenance(config, ctx.alpha_text)},
             {"train_data_sha256", ctx.train_data_sha256},
             {"train_rows", ctx.boundary},
             {"train_last_date", ctx.raw.dates()[ctx.boundary - 1].iso()},
             {"episode", {{"first_row", environment.first_row()}, {"length", environment.episode_length()}}},
             {"env", config.env},
             {"ppo", config.ppo},
             {"selection", selection_json(ctx.selection, config.selection)},
             {"alphas", alphas},
             {"normalizer", result.normalizer.to_json()},
             {"params", ppo::params_to_json(result.params)},
             {"steps", result.steps},
             {"reward_curve", result.reward_curve}};
  cp.text = cp.json.dump(1) + "\n";
  cp.sha256 = sha256_hex(cp.text);
  if (out) *out = std::move(result);
  return cp;
}

// ------------------------------------------------------------------ backtest

double benchmark_return(const fs::path& csv, const std::string& column, const Date& from, const Date& to) {
  const std::string text = read_file(csv);
  const auto lines = text_util::split_lines(text);
  if (lines.empty()) throw ValidationError(csv.string() + ": empty benchmark file");
  const auto header = text_util::split(lines[0], ',');
  std::optional<std::size_t> date_col, value_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto h = text_util::lower(text_util::trim(header[i]));
    if (h == "date") date_col = i;
    if (h == text_util::lower(column)) value_col = i;
  }
  if (!date_col) throw ValidationError(csv.string() + ": benchmark file has no date column");
  if (!value_col) throw ValidationError(csv.string() + ": benchmark file has no column '" + column + "'");
  std::optional<double> start, stop;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (text_util::trim(lines[i]).empty()) continue;
    const auto cells = text_util::split(lines[i], ',');
    if (cells.size() != header.size()) {
      throw ValidationError(csv.string() + ": line " + std::to_string(i + 1) + " has " +
                            std::to_string(cells.size()) + " fields, expected " + std::to_string(header.size()));
    }
    const Date d = Date::parse(text_util::trim(cells[*date_col]));
    if (d != from && d != to) continue;
    const auto v = text_util::parse_double(text_util::trim(cells[*value_col]));
    if (!v || !(*v > 0.0)) {
      throw ValidationError(csv.string() + ": line " + std::to_string(i + 1) + " has no positive " + column);
    }
    (d == from ? start : stop) = *v;
  }
  if (!start) throw ValidationError(csv.string() + ": benchmark has no row for " + from.iso());
  if (!stop) throw ValidationError(csv.string() + ": benchmark has no row for " + to.iso());
  return *stop / *start - 1.0;
}

BacktestSet run_backtests(const RunConfig& config, const json& checkpoint) {
  if (checkpoint.value("format", "") != "alphappo-checkpoint") throw ValidationError("not a checkpoint file");
  const auto params = ppo::params_from_json(checkpoint.at("params"));
  const auto normalizer = ppo::ObservationNormalizer::from_json(checkpoint.at("normalizer"));
  const auto env_cfg = checkpoint.at("env").get<env::EnvConfig>();

  const FeatureFrame raw = load_csv(config.data_path, config.csv);
  const std::size_t b = SplitSpec{config.train_fraction}.boundary(raw.rows());
  if (b != checkpoint.at("train_rows").get<std::size_t>() ||
      raw.dates()[b - 1].iso() != checkpoint.at("train_last_date").get<std::string>()) {
    throw ValidationError("data split does not match the checkpoint's training window");
  }
  if (sha256_hex(to_csv(raw.slice(0, b))) != checkpoint.at("train_data_sha256").get<std::string>()) {
    throw ValidationError("training rows differ from those the checkpoint was trained on");
  }
  const FeatureFrame frame = build_features(raw, env_cfg);

  std::vector<AlphaExpr> exprs;
  for (const auto& a : checkpoint.at("alphas")) {
    exprs.push_back(parse_alpha(a.at("name").get<std::string>() + " = " + a.at("expression").get<std::string>()));
  }
  AlphaMatrix matrix = build_matrix(exprs, frame, b);
  if (matrix.cols() != exprs.size()) throw ValidationError("checkpoint alphas no longer evaluate on this data");
  // Standardize with the statistics frozen in the checkpoint.
  const auto& alphas = checkpoint.at("alphas");
  for (std::size_t j = 0; j < matrix.cols(); ++j) {
    const double m = alphas[j].at("fit_mean").get<double>();
    const double s = alphas[j].at("fit_std").get<double>();
    matrix.fit_mean[j] = m;
    matrix.fit_std[j] = s;
    auto col = matrix.standardized.col(static_cast<Eigen::Index>(j));
    col = (matrix.raw.col(static_cast<Eigen::Index>(j)).array() - m) / s;
  }

  BacktestSet out;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < config.eval_runs; ++i) seeds.push_back(config.eval_seed + i);
  out.stochastic = ppo::evaluate_policy(params, normalizer, matrix, frame, env_cfg, b, frame.rows(), false, seeds);
  out.deterministic = ppo::evaluate_policy(params, normalizer, matrix, frame, env_cfg, b, frame.rows(), true, seeds);
  out.equal_weighted = env::run_equal_weighted(matrix, frame, env_cfg, b, frame.rows());

  const auto& steps = out.equal_weighted.steps;
  const Date first = steps.front().date;
  const auto last_it = std::find(frame.dates().begin(), frame.dates().end(), steps.back().date);
  const auto last_row = static_cast<std::size_t>(last_it - frame.dates().begin());
  const Date exit = frame.dates()[last_row + 1];
  const auto first_row = static_cast<std::size_t>(std::find(frame.dates().begin(), frame.dates().end(), first) -
                                                  frame.dates().begin());
  const auto& close = frame.column(kClose);
  out.asset_buy_and_hold = close[last_row + 1] / close[first_row] - 1.0;
  out.first_date = first.iso();
  out.last_date = exit.iso();
  if (config.benchmark) {
    out.benchmark_return = benchmark_return(config.benchmark->path, config.benchmark->column, first, exit);
  }
  return out;
}

// ------------------------------------------------------------------ commands

std::vector<fs::path> cmd_features(const RunConfig& config) {
  config.validate(true);
  const FeatureFrame raw = load_csv(config.data_path, config.csv);
  const FeatureFrame f = build_features(raw, config.env);
  const auto csv_path = config.output_dir / "features.csv";
  const auto report_path = config.output_dir / "features_report.json";
  write_file(csv_path, to_csv(f));
  const std::string alpha_text = read_alpha_text(config);
  const std::size_t b = SplitSpec{config.train_fraction}.boundary(f.rows());
  write_json(report_path, {{"provenance", provenance(config, alpha_text)},
                           {"data_sha256", sha256_hex(to_csv(raw))},
                           {"rows", f.rows()},
                           {"first_date", f.dates().front().iso()},
                           {"last_date", f.dates().back().iso()},
                           {"train_rows", b},
                           {"insufficient_history", f.rows() < std::max<std::size_t>(100, config.env.quantile_window)},
                           {"columns", f.names()},
                           {"warmup", warmup_report(f)}});
  return {csv_path, report_path};
}

std::vector<fs::path> cmd_eval_alphas(const RunConfig& config) {
  const auto ctx = prepare_training(config);
  json rows = json::array();
  std::string csv = "alpha,ic,mi,gain,gain_normalized\n";
  for (const auto& r : ctx.evaluation.rows) {
    rows.push_back({{"name", r.name},
                    {"ic", optional_number(r.ic)},
                    {"mi", r.mi},
                    {"gain", r.gain},
                    {"gain_normalized", r.gain_normalized}});
    csv += r.name + "," + csv_number(r.ic) + "," + csv_number(r.mi) + "," + csv_number(r.gain) + "," +
           csv_number(r.gain_normalized) + "\n";
  }
  const auto json_path = config.output_dir / "alpha_metrics.json";
  const auto csv_path = config.output_dir / "alpha_metrics.csv";
  write_json(json_path, {{"provenance", provenance(config, ctx.alpha_text)},
                         {"train_data_sha256", ctx.train_data_sha256},
                         {"train_rows", ctx.boundary},
                         {"input_alphas", ctx.alphas.input_count},
                         {"kept", ctx.alphas.matrix.cols()},
                         {"dropped", dropped_json(ctx.alphas.dropped)},
                         {"standardization",
                          {{"names", ctx.alphas.matrix.names},
                           {"mean", ctx.alphas.matrix.fit_mean},
                           {"std", ctx.alphas.matrix.fit_std}}},
                         {"division_by_zero_rows", ctx.alphas.matrix.division_by_zero},
                         {"boost", {{"fit_rows", ctx.evaluation.fit_rows}, {"trees", ctx.evaluation.n_trees}}},
                         {"metrics", rows}});
  write_file(csv_path, csv);
  return {json_path, csv_path};
}

std::vector<fs::path> cmd_select(const RunConfig& config) {
  const auto ctx = prepare_training(config);
  const auto path = config.output_dir / "selection.json";
  write_json(path, {{"provenance", provenance(config, ctx.alpha_text)},
                    {"train_data_sha256", ctx.train_data_sha256},
                    {"candidates", ctx.alphas.matrix.names},
                    {"selection", selection_json(ctx.selection, config.selection)}});
  return {path};
}

std::vector<fs::path> cmd_train(const RunConfig& config) {
  const auto ctx = prepare_training(config);
  const auto cp = train_checkpoint(config, ctx);
  const auto cp_path = config.output_dir / "checkpoint.json";
  const auto curve_path = config.output_dir / "training_curve.csv";
  const auto report_path = config.output_dir / "train_report.json";
  write_file(cp_path, cp.text);
  std::string curve = "rollout,steps,mean_reward\n";
  const auto& rc = cp.json.at("reward_curve");
  for (std::size_t i = 0; i < rc.size(); ++i) {
    curve += std::to_string(i) + "," + std::to_string((i + 1) * config.ppo.rollout_length) + "," +
             csv_number(rc[i].get<double>()) + "\n";
  }
  write_file(curve_path, curve);
  write_json(report_path, {{"provenance", provenance(config, ctx.alpha_text)},
                           {"checkpoint", cp_path.filename().string()},
                           {"checkpoint_sha256", cp.sha256},
                           {"train_data_sha256", ctx.train_data_sha256},
                           {"selection", selection_json(ctx.selection, config.selection)},
                           {"steps", cp.json.at("steps")}});
  return {cp_path, curve_path, report_path};
}

std::vector<fs::path> cmd_backtest(const RunConfig& config, const std::optional<fs::path>& checkpoint) {
  config.validate(true);
  const fs::path cp_path = checkpoint.value_or(config.output_dir / "checkpoint.json");
  const std::string cp_text = read_file(cp_path);
  json cp;
  try {
    cp = json::parse(cp_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(cp_path.string() + ": " + e.what());
  }
  const auto set = run_backtests(config, cp);

  const auto json_path = config.output_dir / "backtest.json";
  const auto table_path = config.output_dir / "backtest_summary.csv";
  const auto det_path = config.output_dir / "ledger_ppo_deterministic.csv";
  const auto ew_path = config.output_dir / "ledger_equal_weighted.csv";

  json prov = provenance(config, read_alpha_text(config));
  prov["checkpoint_sha256"] = sha256_hex(cp_text);
  write_json(json_path, {{"provenance", prov},
                         {"test_window", {{"first_date", set.first_date}, {"exit_date", set.last_date}}},
                         {"ppo_stochastic", evaluation_json(set.stochastic)},
                         {"ppo_deterministic", evaluation_json(set.deterministic)},
                         {"equal_weighted", summary_json(set.equal_weighted.summary)},
                         {"asset_buy_and_hold", set.asset_buy_and_hold},
                         {"benchmark_buy_and_hold", optional_number(set.benchmark_return)}});

  auto row = [](const std::string& name, const ppo::EvaluationSummary& e) {
    return name + "," + csv_number(e.cum_return.mean) + "," + csv_number(e.cum_return.std) + "," +
           (e.sharpe.count ? csv_number(e.sharpe.mean) : "") + "," + (e.sharpe.count ? csv_number(e.sharpe.std) : "") +
           "," + csv_number(e.max_drawdown.mean) + "," + csv_number(e.max_drawdown.std) + "\n";
  };
  std::string table = "strategy,cum_return_mean,cum_return_std,sharpe_mean,sharpe_std,mdd_mean,mdd_std\n";
  table += row("ppo_stochastic", set.stochastic);
  table += row("ppo_deterministic", set.deterministic);
  const auto& ew = set.equal_weighted.summary;
  table += "equal_weighted," + csv_number(ew.cum_return) + ",0," + csv_number(ew.sharpe) + "," +
           (ew.sharpe ? "0" : "") + "," + csv_number(ew.max_drawdown) + ",0\n";
  table += "asset_buy_and_hold," + csv_number(set.asset_buy_and_hold) + ",0,,,,\n";
  if (set.benchmark_return) table += "benchmark_buy_and_hold," + csv_number(*set.benchmark_return) + ",0,,,,\n";
  write_file(table_path, table);
  write_file(det_path, ledger_csv(set.deterministic.runs.front()));
  write_file(ew_path, ledger_csv(set.equal_weighted));
  return {json_path, table_path, det_path, ew_path};
}

namespace {

std::string fixed4(double v) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(4);
  o << v;
  return o.str();
}

std::string fixed4(const json& v) { return v.is_null() ? "n/a" : fixed4(v.get<double>()); }

std::string pad(std::string s, std::size_t width) {
  s.resize(std::max(width, s.size() + 1), ' ');
  return s;
}

std::string stat_text(const json& s) {
  if (s.at("count").get<std::size_t>() == 0) return "n/a";
  return fixed4(s.at("mean")) + " (" + fixed4(s.at("std")) + ")";
}

}  // namespace

std::string cmd_report(const RunConfig& config) {
  std::ostringstream out;
  const auto dir = config.output_dir;
  auto load = [&](const char* name) -> std::optional<json> {
    const auto p = dir / name;
    if (!fs::exists(p)) return std::nullopt;
    return json::parse(read_file(p));
  };
  bool any = false;

  if (auto m = load("alpha_metrics.json")) {
    any = true;
    out << "Alphas: " << m->at("input_alphas").get<std::size_t>() << " input, " << m->at("kept").get<std::size_t>()
        << " kept, " << m->at("dropped").size() << " dropped\n";
    const auto& rows = m->at("metrics");
    std::vector<json> sorted(rows.begin(), rows.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const json& a, const json& b) {
      return a.at("gain_normalized").get<double>() > b.at("gain_normalized").get<double>();
    });
    out << "  " << pad("alpha", 12) << pad("IC", 10) << pad("MI", 10) << "gain share\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(10, sorted.size()); ++i) {
      const auto& r = sorted[i];
      out << "  " << pad(r.at("name").get<std::string>(), 12) << pad(fixed4(r.at("ic")), 10)
          << pad(fixed4(r.at("mi")), 10) << fixed4(r.at("gain_normalized")) << "\n";
    }
  }
  if (auto s = load("selection.json")) {
    any = true;
    const auto& sel = s->at("selection");
    out << "Selection (" << sel.at("method").get<std::string>() << "): " << sel.at("kept").size() << " kept\n";
  }
  if (auto t = load("train_report.json")) {
    any = true;
    out << "Checkpoint: " << t->at("checkpoint").get<std::string>() << " sha256 "
        << t->at("checkpoint_sha256").get<std::string>() << ", " << t->at("steps").get<std::size_t>() << " steps\n";
  }
  if (auto b = load("backtest.json")) {
    any = true;
    out << "Backtest " << b->at("test_window").at("first_date").get<std::string>() << " .. "
        << b->at("test_window").at("exit_date").get<std::string>() << "\n";
    out << "  " << pad("strategy", 24) << pad("cum_return", 20) << pad("sharpe", 20) << "max_drawdown\n";
    for (const char* key : {"ppo_stochastic", "ppo_deterministic"}) {
      const auto& e = b->at(key);
      out << "  " << pad(key, 24) << pad(stat_text(e.at("cum_return")), 20) << pad(stat_text(e.at("sharpe")), 20)
          << stat_text(e.at("max_drawdown")) << "\n";
    }
    const auto& ew = b->at("equal_weighted");
    out << "  " << pad("equal_weighted", 24) << pad(fixed4(ew.at("cum_return")), 20) << pad(fixed4(ew.at("sharpe")), 20)
        << fixed4(ew.at("max_drawdown")) << "\n";
    out << "  " << pad("asset_buy_and_hold", 24) << fixed4(b->at("asset_buy_and_hold")) << "\n";
    if (!b->at("benchmark_buy_and_hold").is_null()) {
      out << "  " << pad("benchmark_buy_and_hold", 24) << fixed4(b->at("benchmark_buy_and_hold")) << "\n";
    }
  }
  if (!any) throw ValidationError("no reports found in " + dir.string());
  return out.str();
}

}  // namespace alphappo::pipeline
