#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "alphappo/common.hpp"
#include "alphappo/trading_env.hpp"
#include "json.hpp"

// Proximal policy optimization with a diagonal Gaussian policy. Networks,
// gradients and the optimizer are written out by hand so every number in a
// checkpoint can be traced back to this file.
namespace alphappo::ppo {

struct PpoConfig {
  double learning_rate = 3e-4;
  std::size_t rollout_length = 2048;
  std::size_t minibatch_size = 64;
  std::size_t epochs_per_rollout = 10;
  double gamma = 0.99;
  double clip_epsilon = 0.2;
  double gae_lambda = 0.95;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  double adam_epsilon = 1e-5;
  double initial_log_std = 0.0;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t total_steps = 100000;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const PpoConfig& c);
void from_json(const nlohmann::json& j, PpoConfig& c);

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Fully connected network: tanh on hidden layers, linear output.
/// Batches are column-major: one sample per column.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t outputs);

  std::size_t inputs() const;
  std::size_t outputs() const;
  std::size_t parameter_count() const;

  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // input, then each hidden layer's output
  };
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients of a scalar loss into `grad` given
  /// d loss / d output.
  void backward(const Cache& cache, const Eigen::MatrixXd& d_out, Mlp& grad) const;

  void set_zero();
  bool all_finite() const;

  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

struct PolicyParams {
  Mlp policy;
  Eigen::VectorXd log_std;
  Mlp value;

  std::size_t obs_dim() const { return policy.inputs(); }
  std::size_t action_dim() const { return policy.outputs(); }
  std::size_t size() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);
  PolicyParams zeros_like() const;
  bool all_finite() const;
};

/// Orthogonal initialization (gain sqrt(2) on hidden layers, 0.01 on the
/// policy output, 1 on the value output), zero biases, log_std at the
/// configured initial value.
PolicyParams init_params(std::size_t obs_dim, std::size_t action_dim, const PpoConfig& config, Rng& rng);

nlohmann::json params_to_json(const PolicyParams& p);
PolicyParams params_from_json(const nlohmann::json& j);

struct ForwardResult {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  double value = 0.0;
};

/// Throws ValidationError on non-finite observations.
ForwardResult policy_forward(const PolicyParams& params, std::span<const double> obs);

struct ActionSample {
  Eigen::VectorXd action;
  double log_prob = 0.0;
};

/// Diagonal Gaussian draw; `deterministic` returns the mean.
ActionSample sample_action(const Eigen::VectorXd& mean, const Eigen::VectorXd& std, Rng& rng,
                           bool deterministic = false);

double gaussian_log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& std, const Eigen::VectorXd& action);

struct RolloutBuffer {
  Eigen::MatrixXd observations;  // obs_dim x L
  Eigen::MatrixXd actions;       // action_dim x L
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<char> dones;
  std::vector<double> advantages;
  std::vector<double> returns;

  RolloutBuffer() = default;
  RolloutBuffer(std::size_t obs_dim, std::size_t action_dim, std::size_t length);
  std::size_t size() const { return rewards.size(); }
};

/// Backward GAE recursion: delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t,
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}; returns = A + V.
/// V_{L} is `last_value`.
void compute_gae(RolloutBuffer& buffer, double last_value, double gamma, double lambda);

struct Minibatch {
  Eigen::MatrixXd observations;  // obs_dim x B
  Eigen::MatrixXd actions;       // action_dim x B
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

/// (A - mean) / (sample std + 1e-8) within the batch.
void normalize_advantages(Eigen::VectorXd& advantages);

struct LossResult {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  PolicyParams grad;
};

/// -mean(min(ratio A, clip(ratio, 1 - eps, 1 + eps) A)) + value_coef mean((R - V)^2)
///   - entropy_coef mean(entropy), with its exact gradient. Advantages are
/// used as given. Throws NumericError if the loss is not finite.
LossResult ppo_loss(const PolicyParams& params, const Minibatch& batch, const PpoConfig& config);

/// Z-score transform with statistics frozen at fit time. Dimensions whose
/// variance is zero (and those marked as passthrough) are centered by 0 and
/// scaled by 1.
class ObservationNormalizer {
 public:
  ObservationNormalizer();
  /// `observations` is obs_dim x samples.
  void fit(const Eigen::MatrixXd& observations, const std::vector<bool>& passthrough = {});
  std::array<double, env::kObservationDim> apply(const std::array<double, env::kObservationDim>& obs) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& observations) const;

  const std::array<double, env::kObservationDim>& mean() const { return mean_; }
  const std::array<double, env::kObservationDim>& scale() const { return scale_; }

  nlohmann::json to_json() const;
  static ObservationNormalizer from_json(const nlohmann::json& j);

 private:
  std::array<double, env::kObservationDim> mean_{};
  std::array<double, env::kObservationDim> scale_{};
};

/// Fits the normalizer on the market rows an environment visits; the previous
/// position dimension is passed through unchanged.
ObservationNormalizer fit_normalizer(const env::TradingEnv& environment);

/// Raised when an update produces non-finite parameters.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, PolicyParams last_good)
      : NumericError(what), last_good_(std::move(last_good)) {}
  const PolicyParams& last_good() const { return last_good_; }

 private:
  PolicyParams last_good_;
};

struct TrainingResult {
  PolicyParams params;
  ObservationNormalizer normalizer;
  /// Mean per-step reward of each collected rollout.
  std::vector<double> reward_curve;
  std::size_t steps = 0;
};

/// Alternates rollout collection over the environment (one episode is one
/// pass over its rows, reset on completion) with epochs of shuffled minibatch
/// updates. Deterministic for a given config.seed.
TrainingResult train(env::TradingEnv& environment, const PpoConfig& config);

struct AggregateStat {
  double mean = 0.0;
  double std = 0.0;  // sample std across runs, 0 for a single run
  std::size_t count = 0;
};

struct EvaluationSummary {
  bool deterministic = false;
  std::vector<std::uint64_t> seeds;
  std::vector<env::BacktestReport> runs;
  AggregateStat cum_return;
  AggregateStat sharpe;  // over runs where it is defined
  AggregateStat max_drawdown;
  AggregateStat mean_reward;
};

AggregateStat aggregate(std::span<const double> values);

/// One backtest per seed. Stochastic runs sample actions from the policy with
/// an Rng seeded per run; deterministic runs act with the mean.
EvaluationSummary evaluate_policy(const PolicyParams& params, const ObservationNormalizer& normalizer,
                                  const AlphaMatrix& matrix, const FeatureFrame& frame, const env::EnvConfig& config,
                                  std::size_t begin, std::size_t end, bool deterministic,
                                  const std::vector<std::uint64_t>& seeds);

}  // namespace alphappo::ppo
