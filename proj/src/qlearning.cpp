#include "seqrl/qlearning.hpp"

#include <algorithm>
#include <cmath>

#include "seqrl/error.hpp"
#include "seqrl/ops.hpp"

namespace seqrl {

std::size_t SequenceBatch::real_slots() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

Tensor SequenceBatch::observation_tensor() const {
  return Tensor({batch, length, shape.channels, shape.height, shape.width}, observations);
}

Tensor SequenceBatch::next_observation_tensor() const {
  return Tensor({batch, length, shape.channels, shape.height, shape.width}, next_observations);
}

SequenceReplayBuffer::SequenceReplayBuffer(std::size_t capacity, ObsShape shape) : capacity_(capacity), shape_(shape) {
  if (capacity == 0) throw DimensionError("replay buffer capacity must be positive");
  if (shape.size() == 0) throw DimensionError("replay buffer observation shape must be non-empty");
  observations_.resize(capacity * shape.size());
  next_observations_.resize(capacity * shape.size());
  actions_.resize(capacity);
  rewards_.resize(capacity);
  terminal_.resize(capacity);
  features_.resize(capacity);
  episode_.resize(capacity);
}

void SequenceReplayBuffer::push(const Observation& obs, std::size_t action, double reward, const Observation& next_obs,
                                bool terminal, const GameFeatures& features, bool episode_end) {
  if (!(obs.shape == shape_) || !(next_obs.shape == shape_)) {
    throw DimensionError("replay buffer: observation shape does not match the buffer");
  }
  std::size_t s;
  if (size_ < capacity_) {
    s = slot(size_);
    ++size_;
  } else {
    s = start_;
    start_ = (start_ + 1) % capacity_;
  }
  const std::size_t n = shape_.size();
  for (std::size_t i = 0; i < n; ++i) {
    observations_[s * n + i] = obs.planes[i] > 0.5 ? 1 : 0;
    next_observations_[s * n + i] = next_obs.planes[i] > 0.5 ? 1 : 0;
  }
  actions_[s] = action;
  rewards_[s] = reward;
  terminal_[s] = terminal ? 1 : 0;
  features_[s] = features;
  episode_[s] = current_episode_;
  if (episode_end) ++current_episode_;
}

void SequenceReplayBuffer::copy_observation(std::size_t index, double* out) const {
  const std::size_t n = shape_.size(), s = slot(index);
  for (std::size_t i = 0; i < n; ++i) out[i] = observations_[s * n + i];
}

void SequenceReplayBuffer::copy_next_observation(std::size_t index, double* out) const {
  const std::size_t n = shape_.size(), s = slot(index);
  for (std::size_t i = 0; i < n; ++i) out[i] = next_observations_[s * n + i];
}

std::size_t SequenceReplayBuffer::window_start(std::size_t end, std::size_t length) const {
  if (end >= size_) throw IndexError("replay buffer: index " + std::to_string(end) + " out of range");
  const std::uint64_t id = episode_id(end);
  std::size_t begin = end;
  while (begin > 0 && end - begin + 1 < length && episode_id(begin - 1) == id) --begin;
  return begin;
}

SequenceBatch sample_minibatch(const SequenceReplayBuffer& buffer, std::size_t batch, std::size_t length, Rng& rng) {
  if (buffer.size() == 0) throw StateError("sample_minibatch: replay buffer is empty");
  if (batch == 0 || length == 0) throw DimensionError("sample_minibatch: batch and length must be positive");
  const std::size_t n = buffer.shape().size();
  SequenceBatch out;
  out.batch = batch;
  out.length = length;
  out.shape = buffer.shape();
  out.observations.assign(batch * length * n, 0.0);
  out.next_observations.assign(batch * length * n, 0.0);
  out.actions.assign(batch * length, 0);
  out.rewards.assign(batch * length, 0.0);
  out.dones.assign(batch * length, 0);
  out.mask.assign(batch * length, 0);
  out.features.assign(batch * length * 3, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t end = static_cast<std::size_t>(rng.below(buffer.size()));
    const std::size_t begin = buffer.window_start(end, length);
    const std::size_t pad = length - (end - begin + 1);
    // The next window is the history one step later, so it still starts
    // with the first frame of this one.
    if (pad > 0) buffer.copy_observation(begin, &out.next_observations[(b * length + pad - 1) * n]);
    for (std::size_t i = begin; i <= end; ++i) {
      const std::size_t k = b * length + pad + (i - begin);
      buffer.copy_observation(i, &out.observations[k * n]);
      buffer.copy_next_observation(i, &out.next_observations[k * n]);
      out.actions[k] = buffer.action(i);
      out.rewards[k] = buffer.reward(i);
      out.dones[k] = buffer.terminal(i) ? 1 : 0;
      out.mask[k] = 1;
      const GameFeatures f = buffer.features(i);
      out.features[k * 3 + 0] = f.health;
      out.features[k * 3 + 1] = f.ammo;
      out.features[k * 3 + 2] = f.enemies;
    }
  }
  return out;
}

std::vector<double> bellman_targets(const SequenceBatch& batch, const Tensor& next_q, double gamma) {
  if (next_q.rank() != 3 || next_q.size(0) != batch.batch || next_q.size(1) != batch.length) {
    throw DimensionError("bellman_targets: next_q " + shape_str(next_q.shape()) + " does not match batch [" +
                         std::to_string(batch.batch) + "x" + std::to_string(batch.length) + "]");
  }
  const std::size_t actions = next_q.size(2);
  const auto q = next_q.data();
  std::vector<double> targets(batch.slots(), 0.0);
  for (std::size_t k = 0; k < batch.slots(); ++k) {
    if (!batch.mask[k]) continue;
    if (batch.dones[k]) {
      targets[k] = batch.rewards[k];
      continue;
    }
    const auto row = q.subspan(k * actions, actions);
    targets[k] = batch.rewards[k] + gamma * *std::max_element(row.begin(), row.end());
  }
  return targets;
}

namespace {

std::vector<std::size_t> real_slot_indices(std::span<const std::uint8_t> mask) {
  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) rows.push_back(k);
  }
  if (rows.empty()) throw StateError("loss over an all-masked batch");
  return rows;
}

}  // namespace

Tensor td_loss(const Tensor& q, std::span<const std::size_t> actions, std::span<const double> targets,
               std::span<const std::uint8_t> mask) {
  if (q.rank() < 2) throw DimensionError("td_loss: q must have an action axis, got " + shape_str(q.shape()));
  const std::size_t a = q.size(q.rank() - 1), slots = q.numel() / a;
  if (actions.size() != slots || targets.size() != slots || mask.size() != slots) {
    throw DimensionError("td_loss: q has " + std::to_string(slots) + " slots but actions/targets/mask have " +
                         std::to_string(actions.size()) + "/" + std::to_string(targets.size()) + "/" +
                         std::to_string(mask.size()));
  }
  const auto rows = real_slot_indices(mask);
  std::vector<std::size_t> cols;
  std::vector<double> wanted;
  for (std::size_t k : rows) {
    cols.push_back(actions[k]);
    wanted.push_back(targets[k]);
  }
  const Tensor chosen = pick(reshape(q, {slots, a}), rows, cols);
  return mse(chosen, Tensor({rows.size()}, std::move(wanted)));
}

Tensor aux_features_loss(const Tensor& predicted, std::span<const double> features, std::span<const std::uint8_t> mask) {
  const std::size_t slots = mask.size();
  if (predicted.numel() != slots * 3 || features.size() != slots * 3) {
    throw DimensionError("aux_features_loss: predicted " + shape_str(predicted.shape()) + " and " +
                         std::to_string(features.size()) + " feature values do not match " + std::to_string(slots) +
                         " slots x 3");
  }
  const auto rows = real_slot_indices(mask);
  std::vector<double> wanted;
  for (std::size_t k : rows) wanted.insert(wanted.end(), features.begin() + k * 3, features.begin() + k * 3 + 3);
  const Tensor chosen = take_rows(reshape(predicted, {slots, 3}), rows);
  return mse(chosen, Tensor({rows.size(), 3}, std::move(wanted)));
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw DimensionError("argmax of an empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t epsilon_greedy(std::span<const double> q, double epsilon, Rng& rng) {
  return epsilon_greedy(q.size(), epsilon, rng, [&] { return std::vector<double>(q.begin(), q.end()); });
}

std::size_t epsilon_greedy(std::size_t actions, double epsilon, Rng& rng, const std::function<std::vector<double>()>& q) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DimensionError("epsilon must lie in [0, 1]");
  if (actions == 0) throw DimensionError("epsilon_greedy: empty action set");
  if (rng.uniform() < epsilon) return static_cast<std::size_t>(rng.below(actions));
  return argmax(q());
}

double linear_epsilon(std::uint64_t step, double start, double end, std::uint64_t horizon) {
  if (horizon == 0 || step >= horizon) return end;
  return start + (end - start) * static_cast<double>(step) / static_cast<double>(horizon);
}

void sync_target(const QNetwork& main, QNetwork& target) { target.params().copy_values_from(main.params()); }

std::vector<double> q_values_for_history(const QNetwork& net, const std::deque<Observation>& history) {
  const ObsShape s = net.observation_shape();
  const std::size_t length = net.context_len(), n = s.size();
  if (history.empty()) throw StateError("q_values_for_history: empty history");
  if (history.size() > length) throw DimensionError("history longer than the context length");
  std::vector<double> frames(length * n, 0.0);
  const std::size_t pad = length - history.size();
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::copy(history[i].planes.begin(), history[i].planes.end(), frames.begin() + static_cast<std::ptrdiff_t>((pad + i) * n));
  }
  NoGradGuard guard;
  const QOutput out = net.forward(Tensor({1, length, s.channels, s.height, s.width}, std::move(frames)));
  const std::size_t a = net.action_count();
  const auto q = out.q.data();
  return std::vector<double>(q.end() - static_cast<std::ptrdiff_t>(a), q.end());
}

void QLearningConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be positive", "batch_size");
  if (buffer_capacity == 0) throw ConfigError("buffer capacity must be positive", "buffer_capacity");
  if (train_interval == 0) throw ConfigError("train interval must be positive", "train_interval");
  if (target_sync == 0) throw ConfigError("target sync interval must be positive", "target_sync");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]", "gamma");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0)) throw ConfigError("epsilon_start must lie in [0, 1]", "epsilon_start");
  if (!(epsilon_end >= 0.0 && epsilon_end <= 1.0)) throw ConfigError("epsilon_end must lie in [0, 1]", "epsilon_end");
  if (aux_weight < 0.0) throw ConfigError("aux weight must be >= 0", "aux_weight");
  if (grad_clip < 0.0) throw ConfigError("grad clip must be >= 0", "grad_clip");
}

QTrainResult train_q_network(QNetwork& net, const EnvSettings& env_settings, const QLearningConfig& config,
                             const MetricsSink& sink) {
  config.validate();
  auto env = make_env(env_settings);
  if (!(env->observation_shape() == net.observation_shape()) || env->action_count() != net.action_count()) {
    throw DimensionError("train_q_network: network does not match the environment's observation/action spaces");
  }
  auto target = net.frozen_copy();
  sync_target(net, *target);
  std::vector<Tensor> params = net.params().tensors();
  AdamState adam = make_adam_state(params, config.adam);

  Rng master(config.seed);
  Rng episode_seeds = master.split();
  Rng act_rng = master.split();
  Rng sample_rng = master.split();

  SequenceReplayBuffer buffer(config.buffer_capacity, net.observation_shape());
  const std::size_t length = net.context_len();
  const bool use_aux = config.aux_weight > 0.0 && net.has_features_head();

  QTrainResult result;
  Observation obs = env->reset(episode_seeds());
  GameFeatures features = env->game_features();
  std::deque<Observation> history;
  double episode_return = 0.0, loss_total = 0.0;
  std::size_t loss_count = 0;
  std::int64_t kills = 0, deaths = 0;

  for (std::uint64_t step = 1; step <= config.total_steps; ++step) {
    history.push_back(obs);
    if (history.size() > length) history.pop_front();
    const double epsilon = linear_epsilon(step - 1, config.epsilon_start, config.epsilon_end, config.epsilon_horizon);
    const std::size_t action =
        epsilon_greedy(net.action_count(), epsilon, act_rng, [&] { return q_values_for_history(net, history); });
    StepResult r = frame_skip_step(*env, action, config.frame_skip);
    buffer.push(obs, action, r.reward, r.observation, r.done && !r.info.timeout, features, r.done);
    episode_return += r.reward;
    kills += r.info.kills;
    deaths += r.info.deaths;
    obs = std::move(r.observation);
    features = r.features;

    if (step >= config.learning_starts && step % config.train_interval == 0) {
      const SequenceBatch batch = sample_minibatch(buffer, config.batch_size, length, sample_rng);
      std::vector<double> targets;
      {
        NoGradGuard guard;
        targets = bellman_targets(batch, target->forward(batch.next_observation_tensor()).q, config.gamma);
      }
      const QOutput out = net.forward(batch.observation_tensor());
      const Tensor td = td_loss(out.q, batch.actions, targets, batch.mask);
      Tensor loss = td;
      result.td_losses.push_back(td.item());
      if (use_aux) {
        const Tensor aux = aux_features_loss(out.features, batch.features, batch.mask);
        result.aux_losses.push_back(aux.item());
        loss = add(td, scale(aux, config.aux_weight));
      }
      const double loss_value = loss.item();
      net.params().zero_grad();
      loss.backward();
      if (config.grad_clip > 0.0) clip_grad_norm(params, config.grad_clip);
      adam_step(params, adam);
      loss_total += loss_value;
      ++loss_count;
      if (++result.gradient_steps % config.target_sync == 0) sync_target(net, *target);
    }

    if (env->done()) {
      ++result.episodes;
      if (sink) {
        MetricsRow row;
        row.step = static_cast<std::int64_t>(step);
        row.episode = static_cast<std::int64_t>(result.episodes);
        row.episode_return = episode_return;
        if (loss_count) row.loss = loss_total / static_cast<double>(loss_count);
        row.epsilon = epsilon;
        row.kills = kills;
        row.deaths = deaths;
        row.kd_ratio = kd_ratio(kills, deaths);
        sink(row);
      }
      episode_return = loss_total = 0.0;
      loss_count = 0;
      kills = deaths = 0;
      history.clear();
      obs = env->reset(episode_seeds());
      features = env->game_features();
    }
    result.steps = step;
  }
  return result;
}

void QPolicy::begin_episode(const Observation&) { history_.clear(); }

std::size_t QPolicy::act(const Observation& obs, Rng& rng) {
  history_.push_back(obs);
  if (history_.size() > net_.context_len()) history_.pop_front();
  return epsilon_greedy(net_.action_count(), epsilon_, rng, [&] { return q_values_for_history(net_, history_); });
}

}  // namespace seqrl
