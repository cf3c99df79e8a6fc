#include "alphappo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "alphappo/rolling.hpp"

namespace alphappo::ppo {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
}

void PpoConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (rollout_length < 1) throw ValidationError("rollout_length must be >= 1");
  if (minibatch_size < 2) throw ValidationError("minibatch_size must be >= 2");
  if (epochs_per_rollout < 1) throw ValidationError("epochs_per_rollout must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ValidationError("gae_lambda must lie in [0, 1]");
  if (!(clip_epsilon > 0.0)) throw ValidationError("clip_epsilon must be > 0");
  if (!(max_grad_norm > 0.0)) throw ValidationError("max_grad_norm must be > 0");
  if (hidden.empty()) throw ValidationError("at least one hidden layer is required");
}

void to_json(nlohmann::json& j, const PpoConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"rollout_length", c.rollout_length},
                     {"minibatch_size", c.minibatch_size},
                     {"epochs_per_rollout", c.epochs_per_rollout},
                     {"gamma", c.gamma},
                     {"clip_epsilon", c.clip_epsilon},
                     {"gae_lambda", c.gae_lambda},
                     {"value_coef", c.value_coef},
                     {"entropy_coef", c.entropy_coef},
                     {"max_grad_norm", c.max_grad_norm},
                     {"adam_epsilon", c.adam_epsilon},
                     {"initial_log_std", c.initial_log_std},
                     {"hidden", c.hidden},
                     {"total_steps", c.total_steps},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PpoConfig& c) {
  c = PpoConfig{};
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.rollout_length = j.value("rollout_length", c.rollout_length);
  c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
  c.epochs_per_rollout = j.value("epochs_per_rollout", c.epochs_per_rollout);
  c.gamma = j.value("gamma", c.gamma);
  c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.initial_log_std = j.value("initial_log_std", c.initial_log_std);
  c.hidden = j.value("hidden", c.hidden);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

// ------------------------------------------------------------------ Mlp

Mlp::Mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t outputs) {
  std::size_t prev = inputs;
  auto add = [&](std::size_t n) {
    weights.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(prev)));
    biases.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
    prev = n;
  };
  for (auto h : hidden) add(h);
  add(outputs);
}

std::size_t Mlp::inputs() const { return static_cast<std::size_t>(weights.front().cols()); }
std::size_t Mlp::outputs() const { return static_cast<std::size_t>(weights.back().rows()); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) n += static_cast<std::size_t>(weights[k].size() + biases[k].size());
  return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  Eigen::MatrixXd h = x;
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(h);
  }
  const std::size_t last = weights.size() - 1;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    Eigen::MatrixXd z = weights[k] * h;
    z.colwise() += biases[k];
    if (k == last) return z;
    h = z.array().tanh().matrix();
    if (cache) cache->activations.push_back(h);
  }
  return h;
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_out, Mlp& grad) const {
  Eigen::MatrixXd dz = d_out;
  for (std::size_t k = weights.size(); k-- > 0;) {
    const auto& h_prev = cache.activations[k];
    grad.weights[k].noalias() += dz * h_prev.transpose();
    grad.biases[k] += dz.rowwise().sum();
    if (k == 0) break;
    Eigen::MatrixXd dh = weights[k].transpose() * dz;
    dz = (dh.array() * (1.0 - h_prev.array().square())).matrix();
  }
}

void Mlp::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

bool Mlp::all_finite() const {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!weights[k].allFinite() || !biases[k].allFinite()) return false;
  }
  return true;
}

// ------------------------------------------------------------------ params

std::size_t PolicyParams::size() const {
  return policy.parameter_count() + static_cast<std::size_t>(log_std.size()) + value.parameter_count();
}

namespace {

template <typename Fn>
void for_each_block(PolicyParams& p, Fn fn) {
  for (std::size_t k = 0; k < p.policy.weights.size(); ++k) {
    fn(p.policy.weights[k].data(), p.policy.weights[k].size());
    fn(p.policy.biases[k].data(), p.policy.biases[k].size());
  }
  fn(p.log_std.data(), p.log_std.size());
  for (std::size_t k = 0; k < p.value.weights.size(); ++k) {
    fn(p.value.weights[k].data(), p.value.weights[k].size());
    fn(p.value.biases[k].data(), p.value.biases[k].size());
  }
}

}  // namespace

Eigen::VectorXd PolicyParams::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(size()));
  Eigen::Index off = 0;
  for_each_block(const_cast<PolicyParams&>(*this), [&](double* data, Eigen::Index n) {
    flat.segment(off, n) = Eigen::Map<const Eigen::VectorXd>(data, n);
    off += n;
  });
  return flat;
}

void PolicyParams::unflatten(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != size()) throw ValidationError("parameter vector size mismatch");
  Eigen::Index off = 0;
  for_each_block(*this, [&](double* data, Eigen::Index n) {
    Eigen::Map<Eigen::VectorXd>(data, n) = flat.segment(off, n);
    off += n;
  });
}

PolicyParams PolicyParams::zeros_like() const {
  PolicyParams z = *this;
  z.policy.set_zero();
  z.value.set_zero();
  z.log_std.setZero();
  return z;
}

bool PolicyParams::all_finite() const { return policy.all_finite() && value.all_finite() && log_std.allFinite(); }

namespace {

Eigen::MatrixXd orthogonal(Eigen::Index rows, Eigen::Index cols, double gain, Rng& rng) {
  const bool tall = rows >= cols;
  const Eigen::Index r = tall ? rows : cols;
  const Eigen::Index c = tall ? cols : rows;
  Eigen::MatrixXd a(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  // Sign fix so the distribution is uniform over orthogonal matrices.
  const Eigen::MatrixXd rr = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < c; ++j) {
    if (rr(j, j) < 0) q.col(j) *= -1.0;
  }
  Eigen::MatrixXd out = tall ? q : Eigen::MatrixXd(q.transpose());
  return gain * out;
}

void init_mlp(Mlp& m, double output_gain, Rng& rng) {
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    const double gain = k + 1 == m.weights.size() ? output_gain : std::numbers::sqrt2;
    m.weights[k] = orthogonal(m.weights[k].rows(), m.weights[k].cols(), gain, rng);
    m.biases[k].setZero();
  }
}

}  // namespace

PolicyParams init_params(std::size_t obs_dim, std::size_t action_dim, const PpoConfig& config, Rng& rng) {
  PolicyParams p;
  p.policy = Mlp(obs_dim, config.hidden, action_dim);
  p.value = Mlp(obs_dim, config.hidden, 1);
  init_mlp(p.policy, 0.01, rng);
  init_mlp(p.value, 1.0, rng);
  p.log_std = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(action_dim), config.initial_log_std);
  return p;
}

namespace {

nlohmann::json mlp_to_json(const Mlp& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    const auto& w = m.weights[k];
    std::vector<double> rowmajor;
    rowmajor.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) rowmajor.push_back(w(i, j));
    }
    layers.push_back({{"rows", w.rows()},
                      {"cols", w.cols()},
                      {"weight", rowmajor},
                      {"bias", std::vector<double>(m.biases[k].data(), m.biases[k].data() + m.biases[k].size())}});
  }
  return layers;
}

Mlp mlp_from_json(const nlohmann::json& layers) {
  Mlp m;
  for (const auto& l : layers) {
    const auto rows = l.at("rows").get<Eigen::Index>();
    const auto cols = l.at("cols").get<Eigen::Index>();
    const auto w = l.at("weight").get<std::vector<double>>();
    const auto b = l.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
      throw ValidationError("checkpoint layer has inconsistent shape");
    }
    Eigen::MatrixXd wm(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) wm(i, j) = w[static_cast<std::size_t>(i * cols + j)];
    }
    m.weights.push_back(std::move(wm));
    m.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), rows));
  }
  if (m.weights.empty()) throw ValidationError("checkpoint network has no layers");
  return m;
}

}  // namespace

nlohmann::json params_to_json(const PolicyParams& p) {
  return {{"policy", mlp_to_json(p.policy)},
          {"log_std", std::vector<double>(p.log_std.data(), p.log_std.data() + p.log_std.size())},
          {"value", mlp_to_json(p.value)}};
}

PolicyParams params_from_json(const nlohmann::json& j) {
  PolicyParams p;
  p.policy = mlp_from_json(j.at("policy"));
  p.value = mlp_from_json(j.at("value"));
  const auto ls = j.at("log_std").get<std::vector<double>>();
  p.log_std = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  if (p.log_std.size() != static_cast<Eigen::Index>(p.policy.outputs())) {
    throw ValidationError("checkpoint log_std length does not match policy outputs");
  }
  if (!p.all_finite()) throw ValidationError("checkpoint contains non-finite parameters");
  return p;
}

// ------------------------------------------------------------------ acting

namespace {

Eigen::VectorXd clamped_log_std(const Eigen::VectorXd& log_std) {
  return log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

}  // namespace

ForwardResult policy_forward(const PolicyParams& params, std::span<const double> obs) {
  if (obs.size() != params.obs_dim()) throw ValidationError("observation has wrong dimension");
  for (double v : obs) {
    if (!std::isfinite(v)) throw ValidationError("non-finite observation");
  }
  const Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
  ForwardResult out;
  out.mean = params.policy.forward(x).col(0);
  out.std = clamped_log_std(params.log_std).array().exp().matrix();
  out.value = params.value.forward(x)(0, 0);
  return out;
}

double gaussian_log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& std, const Eigen::VectorXd& action) {
  double lp = 0.0;
  for (Eigen::Index d = 0; d < mean.size(); ++d) {
    const double z = (action(d) - mean(d)) / std(d);
    lp += -0.5 * z * z - std::log(std(d)) - 0.5 * kLog2Pi;
  }
  return lp;
}

ActionSample sample_action(const Eigen::VectorXd& mean, const Eigen::VectorXd& std, Rng& rng, bool deterministic) {
  ActionSample s;
  if (deterministic) {
    s.action = mean;
  } else {
    s.action.resize(mean.size());
    for (Eigen::Index d = 0; d < mean.size(); ++d) s.action(d) = mean(d) + std(d) * rng.normal();
  }
  s.log_prob = gaussian_log_prob(mean, std, s.action);
  return s;
}

// ------------------------------------------------------------------ GAE

RolloutBuffer::RolloutBuffer(std::size_t obs_dim, std::size_t action_dim, std::size_t length)
    : observations(static_cast<Eigen::Index>(obs_dim), static_cast<Eigen::Index>(length)),
      actions(static_cast<Eigen::Index>(action_dim), static_cast<Eigen::Index>(length)),
      log_probs(length),
      rewards(length),
      values(length),
      dones(length, 0),
      advantages(length),
      returns(length) {}

void compute_gae(RolloutBuffer& buffer, double last_value, double gamma, double lambda) {
  const std::size_t n = buffer.size();
  buffer.advantages.assign(n, 0.0);
  buffer.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next_value = t + 1 < n ? buffer.values[t + 1] : last_value;
    const double live = buffer.dones[t] ? 0.0 : 1.0;
    const double delta = buffer.rewards[t] + gamma * next_value * live - buffer.values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    buffer.advantages[t] = next_adv;
    buffer.returns[t] = next_adv + buffer.values[t];
  }
}

void normalize_advantages(Eigen::VectorXd& a) {
  if (a.size() < 2) return;
  const double mean = a.mean();
  const double sd = std::sqrt((a.array() - mean).square().sum() / static_cast<double>(a.size() - 1));
  a = ((a.array() - mean) / (sd + 1e-8)).matrix();
}

// ------------------------------------------------------------------ loss

LossResult ppo_loss(const PolicyParams& params, const Minibatch& batch, const PpoConfig& config) {
  const auto B = batch.observations.cols();
  const double inv_b = 1.0 / static_cast<double>(B);
  const auto N = static_cast<Eigen::Index>(params.action_dim());

  Mlp::Cache pcache, vcache;
  const Eigen::MatrixXd mean = params.policy.forward(batch.observations, &pcache);
  const Eigen::MatrixXd value = params.value.forward(batch.observations, &vcache);
  const Eigen::VectorXd ls = clamped_log_std(params.log_std);
  const Eigen::ArrayXd inv_var = (-2.0 * ls.array()).exp();

  LossResult out;
  out.grad = params.zeros_like();

  // d loss / d mean and d loss / d (clamped) log_std
  Eigen::MatrixXd d_mean(N, B);
  Eigen::VectorXd d_ls = Eigen::VectorXd::Zero(N);
  Eigen::MatrixXd d_value(1, B);
  const double log_norm = ls.sum() + 0.5 * static_cast<double>(N) * kLog2Pi;

  double policy_obj = 0.0, value_loss = 0.0;
  std::size_t clipped = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const Eigen::ArrayXd diff = (batch.actions.col(i) - mean.col(i)).array();
    const double logp = -0.5 * (diff.square() * inv_var).sum() - log_norm;
    const double ratio = std::exp(logp - batch.old_log_probs(i));
    const double adv = batch.advantages(i);
    const double surr1 = ratio * adv;
    const double surr2 = std::clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon) * adv;
    policy_obj += std::min(surr1, surr2);
    if (std::abs(ratio - 1.0) > config.clip_epsilon) ++clipped;

    // The unclipped arm carries the gradient whenever it is the minimum.
    const double d_logp = surr1 <= surr2 ? -inv_b * adv * ratio : 0.0;
    d_mean.col(i) = (d_logp * diff * inv_var).matrix();
    d_ls += (d_logp * (diff.square() * inv_var - 1.0)).matrix();

    const double err = value(0, i) - batch.returns(i);
    value_loss += err * err;
    d_value(0, i) = config.value_coef * 2.0 * inv_b * err;
  }
  out.policy_loss = -policy_obj * inv_b;
  out.value_loss = value_loss * inv_b;
  out.entropy = ls.sum() + 0.5 * static_cast<double>(N) * (1.0 + kLog2Pi);
  out.clip_fraction = static_cast<double>(clipped) * inv_b;
  out.loss = out.policy_loss + config.value_coef * out.value_loss - config.entropy_coef * out.entropy;
  if (!std::isfinite(out.loss)) {
    throw NumericError("PPO loss is not finite (policy " + std::to_string(out.policy_loss) + ", value " +
                       std::to_string(out.value_loss) + "); probability ratio exploded");
  }

  d_ls.array() -= config.entropy_coef;
  for (Eigen::Index d = 0; d < N; ++d) {
    const double raw = params.log_std(d);
    out.grad.log_std(d) = (raw >= kLogStdMin && raw <= kLogStdMax) ? d_ls(d) : 0.0;
  }
  params.policy.backward(pcache, d_mean, out.grad.policy);
  params.value.backward(vcache, d_value, out.grad.value);
  return out;
}

// ------------------------------------------------------------------ normalizer

ObservationNormalizer::ObservationNormalizer() { scale_.fill(1.0); }

void ObservationNormalizer::fit(const Eigen::MatrixXd& obs, const std::vector<bool>& passthrough) {
  if (obs.rows() != static_cast<Eigen::Index>(env::kObservationDim)) {
    throw ValidationError("normalizer expects observations of dimension 8");
  }
  if (obs.cols() < 2) throw ValidationError("normalizer needs at least 2 observations");
  for (std::size_t d = 0; d < env::kObservationDim; ++d) {
    mean_[d] = 0.0;
    scale_[d] = 1.0;
    if (d < passthrough.size() && passthrough[d]) continue;
    const Eigen::VectorXd row = obs.row(static_cast<Eigen::Index>(d)).transpose();
    const std::span<const double> s(row.data(), static_cast<std::size_t>(row.size()));
    const double m = rolling::sample_mean(s);
    const double sd = rolling::sample_stddev(s);
    if (sd > 0.0 && std::isfinite(sd)) {
      mean_[d] = m;
      scale_[d] = sd;
    } else {
      mean_[d] = m;
    }
  }
}

std::array<double, env::kObservationDim> ObservationNormalizer::apply(
    const std::array<double, env::kObservationDim>& obs) const {
  std::array<double, env::kObservationDim> out{};
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = (obs[d] - mean_[d]) / scale_[d];
  return out;
}

Eigen::MatrixXd ObservationNormalizer::apply(const Eigen::MatrixXd& obs) const {
  Eigen::MatrixXd out = obs;
  for (Eigen::Index d = 0; d < out.rows(); ++d) {
    out.row(d) = (out.row(d).array() - mean_[static_cast<std::size_t>(d)]) / scale_[static_cast<std::size_t>(d)];
  }
  return out;
}

nlohmann::json ObservationNormalizer::to_json() const { return {{"mean", mean_}, {"scale", scale_}}; }

ObservationNormalizer ObservationNormalizer::from_json(const nlohmann::json& j) {
  ObservationNormalizer n;
  n.mean_ = j.at("mean").get<std::array<double, env::kObservationDim>>();
  n.scale_ = j.at("scale").get<std::array<double, env::kObservationDim>>();
  for (double s : n.scale_) {
    if (!(s > 0.0)) throw ValidationError("normalizer scale must be positive");
  }
  return n;
}

ObservationNormalizer fit_normalizer(const env::TradingEnv& environment) {
  const std::size_t n = environment.episode_length();
  Eigen::MatrixXd obs(static_cast<Eigen::Index>(env::kObservationDim), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const auto o = environment.state_at(environment.first_row() + k, 0.0).observation();
    for (std::size_t d = 0; d < o.size(); ++d) obs(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) = o[d];
  }
  ObservationNormalizer norm;
  std::vector<bool> passthrough(env::kObservationDim, false);
  passthrough[5] = true;  // previous position
  norm.fit(obs, passthrough);
  return norm;
}

// ------------------------------------------------------------------ training

namespace {

class Adam {
 public:
  Adam(std::size_t n, double lr, double eps)
      : m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
        v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
        lr_(lr),
        eps_(eps) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + eps_);
  }

 private:
  Eigen::VectorXd m_, v_;
  double lr_, eps_;
  double beta1_ = 0.9, beta2_ = 0.999;
  long t_ = 0;
};

Eigen::VectorXd to_vector(const std::array<double, env::kObservationDim>& a) {
  return Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
}

}  // namespace

TrainingResult train(env::TradingEnv& environment, const PpoConfig& config) {
  config.validate();
  Rng rng(config.seed);
  TrainingResult result;
  result.params = init_params(env::kObservationDim, environment.action_dim(), config, rng);
  result.normalizer = fit_normalizer(environment);
  if (config.total_steps == 0) return result;

  auto& params = result.params;
  const std::size_t L = config.rollout_length;
  const std::size_t n_rollouts = (config.total_steps + L - 1) / L;
  Adam adam(params.size(), config.learning_rate, config.adam_epsilon);
  Eigen::VectorXd flat = params.flatten();

  RolloutBuffer buf(env::kObservationDim, environment.action_dim(), L);
  auto state = environment.reset();
  std::vector<std::size_t> order(L);
  std::vector<double> raw(environment.action_dim());

  for (std::size_t r = 0; r < n_rollouts; ++r) {
    double reward_sum = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const auto obs = result.normalizer.apply(state.observation());
      const auto fwd = policy_forward(params, obs);
      const auto act = sample_action(fwd.mean, fwd.std, rng);
      std::copy(act.action.data(), act.action.data() + act.action.size(), raw.begin());
      const auto out = environment.step(raw);

      const auto ti = static_cast<Eigen::Index>(t);
      buf.observations.col(ti) = to_vector(obs);
      buf.actions.col(ti) = act.action;
      buf.log_probs[t] = act.log_prob;
      buf.values[t] = fwd.value;
      buf.rewards[t] = out.result.reward;
      buf.dones[t] = out.done ? 1 : 0;
      reward_sum += out.result.reward;
      state = out.done ? environment.reset() : out.next;
    }
    const auto last_obs = result.normalizer.apply(state.observation());
    const double last_value = policy_forward(params, last_obs).value;
    compute_gae(buf, last_value, config.gamma, config.gae_lambda);
    result.reward_curve.push_back(reward_sum / static_cast<double>(L));
    result.steps += L;

    for (std::size_t epoch = 0; epoch < config.epochs_per_rollout; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = L; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

      for (std::size_t start = 0; start < L; start += config.minibatch_size) {
        const std::size_t B = std::min(config.minibatch_size, L - start);
        if (B < 2) continue;
        Minibatch mb;
        mb.observations.resize(static_cast<Eigen::Index>(env::kObservationDim), static_cast<Eigen::Index>(B));
        mb.actions.resize(buf.actions.rows(), static_cast<Eigen::Index>(B));
        mb.old_log_probs.resize(static_cast<Eigen::Index>(B));
        mb.advantages.resize(static_cast<Eigen::Index>(B));
        mb.returns.resize(static_cast<Eigen::Index>(B));
        for (std::size_t k = 0; k < B; ++k) {
          const auto src = order[start + k];
          const auto si = static_cast<Eigen::Index>(src);
          const auto ki = static_cast<Eigen::Index>(k);
          mb.observations.col(ki) = buf.observations.col(si);
          mb.actions.col(ki) = buf.actions.col(si);
          mb.old_log_probs(ki) = buf.log_probs[src];
          mb.advantages(ki) = buf.advantages[src];
          mb.returns(ki) = buf.returns[src];
        }
        normalize_advantages(mb.advantages);

        const auto loss = ppo_loss(params, mb, config);
        Eigen::VectorXd g = loss.grad.flatten();
        const double norm = g.norm();
        if (norm > config.max_grad_norm) g *= config.max_grad_norm / (norm + 1e-6);

        const PolicyParams last_good = params;
        adam.step(flat, g);
        params.unflatten(flat);
        if (!params.all_finite()) {
          throw TrainingAborted("non-finite parameters after update in rollout " + std::to_string(r) + ", epoch " +
                                    std::to_string(epoch),
                                last_good);
        }
      }
    }
  }
  return result;
}

// ------------------------------------------------------------------ evaluation

AggregateStat aggregate(std::span<const double> values) {
  AggregateStat s;
  s.count = values.size();
  if (values.empty()) return s;
  // Shifted by the first value so identical runs give exactly that mean and std 0.
  const double x0 = values.front();
  double shift = 0.0;
  for (double v : values) shift += v - x0;
  shift /= static_cast<double>(values.size());
  s.mean = x0 + shift;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - x0 - shift) * (v - x0 - shift);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

EvaluationSummary evaluate_policy(const PolicyParams& params, const ObservationNormalizer& normalizer,
                                  const AlphaMatrix& matrix, const FeatureFrame& frame, const env::EnvConfig& config,
                                  std::size_t begin, std::size_t end, bool deterministic,
                                  const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ValidationError("evaluation needs at least one run");
  if (matrix.cols() != params.action_dim()) {
    throw ValidationError("policy outputs " + std::to_string(params.action_dim()) + " weights but matrix has " +
                          std::to_string(matrix.cols()) + " alphas");
  }
  EvaluationSummary out;
  out.deterministic = deterministic;
  out.seeds = seeds;
  for (auto seed : seeds) {
    Rng rng(seed);
    const env::Policy policy = [&](const env::EnvState& s, std::size_t) {
      const auto fwd = policy_forward(params, normalizer.apply(s.observation()));
      const auto a = sample_action(fwd.mean, fwd.std, rng, deterministic);
      return std::vector<double>(a.action.data(), a.action.data() + a.action.size());
    };
    out.runs.push_back(env::run_backtest(policy, matrix, frame, config, begin, end));
  }
  std::vector<double> cum, sharpe, mdd, mr;
  for (const auto& r : out.runs) {
    cum.push_back(r.summary.cum_return);
    if (r.summary.sharpe) sharpe.push_back(*r.summary.sharpe);
    mdd.push_back(r.summary.max_drawdown);
    mr.push_back(r.summary.mean_reward);
  }
  out.cum_return = aggregate(cum);
  out.sharpe = aggregate(sharpe);
  out.max_drawdown = aggregate(mdd);
  out.mean_reward = aggregate(mr);
  return out;
}

}  // namespace alphappo::ppo
