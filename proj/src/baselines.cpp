#include "seqrl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqrl/error.hpp"
#include "seqrl/ops.hpp"

namespace seqrl {

LSTMParams LSTMParams::declare(ParameterStore& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                               Rng& rng) {
  if (input == 0 || hidden == 0) throw DimensionError("LSTM: input and hidden sizes must be positive");
  LSTMParams p;
  p.hidden = hidden;
  p.input_weight = store.declare(prefix + ".wx", {input, 4 * hidden}, init::xavier_uniform(), rng);
  p.recurrent_weight = store.declare(prefix + ".wh", {hidden, 4 * hidden}, init::xavier_uniform(), rng);
  p.bias = store.declare(
      prefix + ".b", {4 * hidden},
      [hidden](const Shape& shape, Rng&) {
        std::vector<double> b(shape_numel(shape), 0.0);
        std::fill(b.begin() + static_cast<std::ptrdiff_t>(hidden), b.begin() + static_cast<std::ptrdiff_t>(2 * hidden), 1.0);
        return b;
      },
      rng);
  return p;
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c, const LSTMParams& p) {
  const std::size_t n = p.hidden;
  if (h.shape() != c.shape() || h.shape().back() != n) {
    throw DimensionError("lstm_cell: state shapes " + shape_str(h.shape()) + " / " + shape_str(c.shape()) +
                         " do not match hidden size " + std::to_string(n));
  }
  if (x.rank() != h.rank() || (x.rank() == 2 && x.size(0) != h.size(0))) {
    throw DimensionError("lstm_cell: input " + shape_str(x.shape()) + " does not match state " + shape_str(h.shape()));
  }
  const Tensor gates = add(linear(x, p.input_weight, p.bias), linear(h, p.recurrent_weight));
  const std::size_t axis = gates.rank() - 1;
  const Tensor i = sigmoid(slice(gates, axis, 0, n));
  const Tensor f = sigmoid(slice(gates, axis, n, 2 * n));
  const Tensor g = tanh(slice(gates, axis, 2 * n, 3 * n));
  const Tensor o = sigmoid(slice(gates, axis, 3 * n, 4 * n));
  const Tensor c_next = add(mul(f, c), mul(i, g));
  return {mul(o, tanh(c_next)), c_next};
}

// ------------------------------------------------------------------- DRQN

DRQN::DRQN(const DRQNConfig& config, ObsShape shape, std::size_t actions, std::uint64_t seed)
    : config_(config), shape_(shape), actions_(actions), store_(true) {
  Rng rng(seed);
  bind(rng);
}

DRQN::DRQN(const DRQNConfig& config, ObsShape shape, std::size_t actions, ParameterStore store)
    : config_(config), shape_(shape), actions_(actions), store_(std::move(store)) {
  Rng rng(0);
  const std::size_t before = store_.size();
  bind(rng);
  if (store_.size() != before) throw DimensionError("DRQN: parameter store is missing entries for this configuration");
}

void DRQN::bind(Rng& rng) {
  if (actions_ == 0) throw DimensionError("DRQN: action count must be positive");
  if (config_.context_len == 0) throw DimensionError("DRQN: context length must be positive");
  EncoderConfig enc;
  enc.channels = shape_.channels;
  enc.height = shape_.height;
  enc.width = shape_.width;
  enc.conv1_filters = config_.conv1_filters;
  enc.conv2_filters = config_.conv2_filters;
  enc.d_model = config_.embed_dim;
  encoder_ = EncoderParams::declare(store_, "encoder", enc, rng);
  lstm_ = LSTMParams::declare(store_, "lstm", config_.embed_dim, config_.hidden, rng);
  q_weight_ = store_.declare("q_head.weight", {config_.hidden, actions_}, init::xavier_uniform(0.01), rng);
  q_bias_ = store_.declare("q_head.bias", {actions_}, init::zeros(), rng);
}

QOutput DRQN::forward(const Tensor& frames) const {
  if (frames.rank() != 5) throw DimensionError("DRQN: expected frames [B,L,C,H,W], got " + shape_str(frames.shape()));
  const std::size_t batch = frames.size(0), length = frames.size(1);
  if (length == 0 || length > config_.context_len) {
    throw DimensionError("DRQN: window of " + std::to_string(length) + " outside [1, " +
                         std::to_string(config_.context_len) + "]");
  }
  const Tensor emb = encode_observations(frames, encoder_);
  Tensor h({batch, config_.hidden}), c({batch, config_.hidden});
  std::vector<Tensor> outputs;
  for (std::size_t t = 0; t < length; ++t) {
    std::tie(h, c) = lstm_cell(select(emb, 1, t), h, c, lstm_);
    outputs.push_back(h);
  }
  QOutput out;
  out.embeddings = stack(outputs, 1);
  out.q = linear(out.embeddings, q_weight_, q_bias_);
  return out;
}

std::unique_ptr<QNetwork> DRQN::frozen_copy() const {
  return std::make_unique<DRQN>(config_, shape_, actions_, store_.clone(false));
}

Tensor drqn_forward(const DRQN& net, const Tensor& frames) {
  if (frames.rank() != 4) throw DimensionError("drqn_forward: expected frames [T,C,H,W], got " + shape_str(frames.shape()));
  Shape batched = frames.shape();
  batched.insert(batched.begin(), 1);
  const Tensor q = net.forward(reshape(frames, batched)).q;
  return reshape(q, {frames.size(0), q.size(2)});
}

// -------------------------------------------------------------------- PPO

void PPOConfig::validate() const {
  if (hidden == 0) throw ConfigError("ppo hidden size must be positive", "ppo.hidden");
  if (n_envs == 0) throw ConfigError("ppo needs at least one environment", "ppo.n_envs");
  if (horizon < n_envs) throw ConfigError("ppo horizon must be at least the number of environments", "ppo.horizon");
  if (epochs == 0) throw ConfigError("ppo epochs must be positive", "ppo.epochs");
  if (minibatch == 0) throw ConfigError("ppo minibatch must be positive", "ppo.minibatch");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ppo gamma must lie in [0, 1]", "ppo.gamma");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("ppo lambda must lie in [0, 1]", "ppo.lambda");
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("ppo clip must lie in (0, 1)", "ppo.clip");
  if (!(reward_scale > 0.0 && std::isfinite(reward_scale))) throw ConfigError("ppo reward scale must be positive", "ppo.reward_scale");
}

PPOModel::PPOModel(std::size_t hidden, ObsShape shape, std::size_t actions, std::uint64_t seed)
    : hidden_(hidden), shape_(shape), actions_(actions), store_(true) {
  Rng rng(seed);
  bind(rng);
}

PPOModel::PPOModel(std::size_t hidden, ObsShape shape, std::size_t actions, ParameterStore store)
    : hidden_(hidden), shape_(shape), actions_(actions), store_(std::move(store)) {
  Rng rng(0);
  const std::size_t before = store_.size();
  bind(rng);
  if (store_.size() != before) throw DimensionError("PPO: parameter store is missing entries for this configuration");
}

void PPOModel::bind(Rng& rng) {
  if (actions_ == 0 || hidden_ == 0 || shape_.size() == 0) throw DimensionError("PPO: sizes must be positive");
  const std::size_t in = shape_.size();
  w1_ = store_.declare("ppo.w1", {in, hidden_}, init::xavier_uniform(), rng);
  b1_ = store_.declare("ppo.b1", {hidden_}, init::zeros(), rng);
  w2_ = store_.declare("ppo.w2", {hidden_, hidden_}, init::xavier_uniform(), rng);
  b2_ = store_.declare("ppo.b2", {hidden_}, init::zeros(), rng);
  pi_w_ = store_.declare("ppo.policy.weight", {hidden_, actions_}, init::xavier_uniform(0.01), rng);
  pi_b_ = store_.declare("ppo.policy.bias", {actions_}, init::zeros(), rng);
  v_w_ = store_.declare("ppo.value.weight", {hidden_, 1}, init::xavier_uniform(), rng);
  v_b_ = store_.declare("ppo.value.bias", {1}, init::zeros(), rng);
}

PPOOutput PPOModel::forward(const Tensor& observations) const {
  if (observations.rank() != 2 || observations.size(1) != shape_.size()) {
    throw DimensionError("PPO: expected observations [N x " + std::to_string(shape_.size()) + "], got " +
                         shape_str(observations.shape()));
  }
  const Tensor h = tanh(linear(tanh(linear(observations, w1_, b1_)), w2_, b2_));
  PPOOutput out;
  out.logits = linear(h, pi_w_, pi_b_);
  out.value = reshape(linear(h, v_w_, v_b_), {observations.size(0)});
  return out;
}

GaeResult ppo_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                  double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw DimensionError("ppo_gae: rewards/values/dones lengths " + std::to_string(n) + "/" +
                         std::to_string(values.size()) + "/" + std::to_string(dones.size()) + " differ");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.targets.assign(n, 0.0);
  double next_value = bootstrap, next_advantage = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    out.advantages[i] = delta + gamma * lambda * live * next_advantage;
    out.targets[i] = out.advantages[i] + values[i];
    next_value = values[i];
    next_advantage = out.advantages[i];
  }
  return out;
}

Tensor categorical_entropy(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("categorical_entropy: expected [N x A], got " + shape_str(logits.shape()));
  const Tensor logp = log_softmax(logits);
  return scale(sum(mul(exp(logp), logp)), -1.0 / static_cast<double>(logits.size(0)));
}

PPOLossTerms ppo_clip_loss(const Tensor& new_log_probs, std::span<const double> old_log_probs,
                           std::span<const double> advantages, const Tensor& values,
                           std::span<const double> value_targets, const Tensor& entropy, double clip, double value_coef,
                           double entropy_coef) {
  const std::size_t n = new_log_probs.numel();
  if (old_log_probs.size() != n || advantages.size() != n || values.numel() != n || value_targets.size() != n) {
    throw DimensionError("ppo_clip_loss: inputs disagree on batch size " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(old_log_probs[i]) || !std::isfinite(advantages[i]) || !std::isfinite(value_targets[i])) {
      throw NumericError("ppo_clip_loss: non-finite input at index " + std::to_string(i));
    }
  }
  const Shape shape{n};
  const Tensor adv(shape, std::vector<double>(advantages.begin(), advantages.end()));
  const Tensor old(shape, std::vector<double>(old_log_probs.begin(), old_log_probs.end()));
  const Tensor ratio = exp(sub(reshape(new_log_probs, shape), old));
  const Tensor surrogate = minimum(mul(ratio, adv), mul(clamp(ratio, 1.0 - clip, 1.0 + clip), adv));
  PPOLossTerms t;
  t.policy = scale(mean(surrogate), -1.0);
  t.value = mse(reshape(values, shape), Tensor(shape, std::vector<double>(value_targets.begin(), value_targets.end())));
  t.entropy = entropy;
  t.total = add(add(t.policy, scale(t.value, value_coef)), scale(entropy, -entropy_coef));
  return t;
}

std::vector<double> normalize_advantages(std::span<const double> advantages) {
  std::vector<double> out(advantages.begin(), advantages.end());
  if (out.empty()) return out;
  const double m = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  double var = 0.0;
  for (double a : out) var += (a - m) * (a - m);
  const double sd = std::sqrt(var / static_cast<double>(out.size()));
  for (double& a : out) a = sd > 1e-12 ? (a - m) / sd : a - m;
  return out;
}

namespace {

Tensor flatten_observations(const std::vector<const Observation*>& observations, std::size_t size) {
  std::vector<double> data;
  data.reserve(observations.size() * size);
  for (const Observation* o : observations) data.insert(data.end(), o->planes.begin(), o->planes.end());
  return Tensor({observations.size(), size}, std::move(data));
}

}  // namespace

PPOTrainResult train_ppo(PPOModel& model, const EnvSettings& env_settings, const PPOConfig& config,
                         const MetricsSink& sink) {
  config.validate();
  const std::size_t n_envs = config.n_envs, per_env = config.horizon / config.n_envs;
  const std::size_t obs_size = model.observation_shape().size(), n_actions = model.action_count();
  Rng master(config.seed);
  Rng episode_seeds = master.split();
  Rng act_rng = master.split();
  Rng shuffle_rng = master.split();

  std::vector<std::unique_ptr<Environment>> envs;
  std::vector<Observation> current;
  for (std::size_t e = 0; e < n_envs; ++e) {
    envs.push_back(make_env(env_settings));
    if (!(envs.back()->observation_shape() == model.observation_shape()) || envs.back()->action_count() != n_actions) {
      throw DimensionError("train_ppo: model does not match the environment's observation/action spaces");
    }
    current.push_back(envs.back()->reset(episode_seeds()));
  }
  std::vector<Tensor> params = model.params().tensors();
  AdamState adam = make_adam_state(params, config.adam);
  std::vector<double> running_return(n_envs, 0.0);

  PPOTrainResult result;
  while (result.steps < config.total_steps) {
    const std::size_t steps_this = std::min<std::uint64_t>(per_env, (config.total_steps - result.steps + n_envs - 1) / n_envs);
    // Per-env trajectories laid out env-major: index e * steps_this + t.
    std::vector<double> obs(n_envs * steps_this * obs_size), rewards(n_envs * steps_this), values(n_envs * steps_this),
        log_probs(n_envs * steps_this);
    std::vector<std::size_t> actions(n_envs * steps_this);
    std::vector<std::uint8_t> dones(n_envs * steps_this);
    std::vector<double> finished;
    for (std::size_t t = 0; t < steps_this; ++t) {
      std::vector<const Observation*> ptrs;
      for (const auto& o : current) ptrs.push_back(&o);
      PPOOutput out;
      {
        NoGradGuard guard;
        out = model.forward(flatten_observations(ptrs, obs_size));
      }
      const auto logits = out.logits.data();
      for (std::size_t e = 0; e < n_envs; ++e) {
        const std::size_t k = e * steps_this + t;
        const auto row = logits.subspan(e * n_actions, n_actions);
        const std::size_t a = sample_categorical(row, act_rng);
        const double top = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double l : row) z += std::exp(l - top);
        std::copy(current[e].planes.begin(), current[e].planes.end(), obs.begin() + static_cast<std::ptrdiff_t>(k * obs_size));
        actions[k] = a;
        log_probs[k] = row[a] - top - std::log(z);
        values[k] = out.value.data()[e];
        StepResult r = frame_skip_step(*envs[e], a, config.frame_skip);
        rewards[k] = r.reward * config.reward_scale;
        dones[k] = r.done ? 1 : 0;
        running_return[e] += r.reward;
        if (r.done) {
          finished.push_back(running_return[e]);
          running_return[e] = 0.0;
          ++result.episodes;
          current[e] = envs[e]->reset(episode_seeds());
        } else {
          current[e] = std::move(r.observation);
        }
      }
      result.steps += n_envs;
    }

    std::vector<double> bootstrap(n_envs);
    {
      std::vector<const Observation*> ptrs;
      for (const auto& o : current) ptrs.push_back(&o);
      NoGradGuard guard;
      const PPOOutput out = model.forward(flatten_observations(ptrs, obs_size));
      for (std::size_t e = 0; e < n_envs; ++e) bootstrap[e] = out.value.data()[e];
    }
    std::vector<double> advantages, targets;
    for (std::size_t e = 0; e < n_envs; ++e) {
      const std::size_t off = e * steps_this;
      const GaeResult g = ppo_gae(std::span(rewards).subspan(off, steps_this), std::span(values).subspan(off, steps_this),
                                  std::span(dones).subspan(off, steps_this), bootstrap[e], config.gamma, config.lambda);
      advantages.insert(advantages.end(), g.advantages.begin(), g.advantages.end());
      targets.insert(targets.end(), g.targets.begin(), g.targets.end());
    }

    const std::size_t total = n_envs * steps_this;
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    double entropy_sum = 0.0, loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      for (std::size_t i = total; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);
      for (std::size_t begin = 0; begin < total; begin += config.minibatch) {
        const std::size_t end = std::min(total, begin + config.minibatch), n = end - begin;
        std::vector<double> mb_obs(n * obs_size), mb_old(n), mb_adv(n), mb_targets(n);
        std::vector<std::size_t> mb_actions(n), rows(n);
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t k = order[begin + j];
          std::copy(obs.begin() + static_cast<std::ptrdiff_t>(k * obs_size),
                    obs.begin() + static_cast<std::ptrdiff_t>((k + 1) * obs_size), mb_obs.begin() + static_cast<std::ptrdiff_t>(j * obs_size));
          mb_old[j] = log_probs[k];
          mb_adv[j] = advantages[k];
          mb_targets[j] = targets[k];
          mb_actions[j] = actions[k];
          rows[j] = j;
        }
        mb_adv = normalize_advantages(mb_adv);
        const PPOOutput out = model.forward(Tensor({n, obs_size}, std::move(mb_obs)));
        const Tensor new_log_probs = pick(log_softmax(out.logits), rows, mb_actions);
        const Tensor entropy = categorical_entropy(out.logits);
        const PPOLossTerms terms = ppo_clip_loss(new_log_probs, mb_old, mb_adv, out.value, mb_targets, entropy,
                                                 config.clip, config.value_coef, config.entropy_coef);
        entropy_sum += entropy.item();
        loss_sum += terms.total.item();
        ++batches;
        model.params().zero_grad();
        terms.total.backward();
        if (config.max_grad_norm > 0.0) clip_grad_norm(params, config.max_grad_norm);
        adam_step(params, adam);
      }
    }
    const double mean_entropy = entropy_sum / static_cast<double>(batches);
    result.entropies.push_back(mean_entropy);
    std::optional<double> mean_return;
    if (!finished.empty()) {
      mean_return = std::accumulate(finished.begin(), finished.end(), 0.0) / static_cast<double>(finished.size());
      result.update_returns.push_back(*mean_return);
    }
    if (sink) {
      MetricsRow row;
      row.step = static_cast<std::int64_t>(result.steps);
      row.episode = static_cast<std::int64_t>(result.episodes);
      row.episode_return = mean_return;
      row.loss = loss_sum / static_cast<double>(batches);
      sink(row);
    }
  }
  return result;
}

std::size_t PPOPolicy::act(const Observation& obs, Rng& rng) {
  PPOOutput out;
  {
    NoGradGuard guard;
    out = model_.forward(Tensor({1, obs.planes.size()}, obs.planes));
  }
  const auto logits = out.logits.data();
  return greedy_ ? argmax(logits) : sample_categorical(logits, rng);
}

}  // namespace seqrl
