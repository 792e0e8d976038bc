#include "seqrl/dt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqrl/error.hpp"
#include "seqrl/ops.hpp"

namespace seqrl {

std::vector<double> compute_rtg(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DimensionError("compute_rtg: gamma must lie in [0, 1]");
  std::vector<double> rtg(rewards.size());
  double next = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    rtg[t] = rewards[t] + gamma * next;
    next = rtg[t];
  }
  return rtg;
}

void DTConfig::validate() const {
  transformer.validate();
  if (!(rtg_scale > 0.0)) throw ConfigError("dt rtg scale must be positive", "dt.rtg_scale");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("dt gamma must lie in [0, 1]", "dt.gamma");
  if (batch_size == 0) throw ConfigError("dt batch size must be positive", "dt.batch_size");
  if (temperature < 0.0) throw ConfigError("dt temperature must be >= 0", "dt.temperature");
}

DecisionTransformer::DecisionTransformer(const DTConfig& config, ObsShape shape, std::size_t actions, std::uint64_t seed)
    : config_(config), shape_(shape), actions_(actions), store_(true) {
  Rng rng(seed);
  bind(rng);
}

DecisionTransformer::DecisionTransformer(const DTConfig& config, ObsShape shape, std::size_t actions,
                                         ParameterStore store)
    : config_(config), shape_(shape), actions_(actions), store_(std::move(store)) {
  Rng rng(0);
  const std::size_t before = store_.size();
  bind(rng);
  if (store_.size() != before) throw DimensionError("DT: parameter store is missing entries for this configuration");
}

void DecisionTransformer::bind(Rng& rng) {
  config_.validate();
  if (actions_ == 0) throw DimensionError("DT: action count must be positive");
  const std::size_t d = config_.transformer.d_model;
  EncoderConfig enc;
  enc.channels = shape_.channels;
  enc.height = shape_.height;
  enc.width = shape_.width;
  enc.conv1_filters = config_.conv1_filters;
  enc.conv2_filters = config_.conv2_filters;
  enc.d_model = d;
  encoder_ = EncoderParams::declare(store_, "encoder", enc, rng);
  rtg_weight_ = store_.declare("rtg_embed.weight", {1, d}, init::xavier_uniform(), rng);
  rtg_bias_ = store_.declare("rtg_embed.bias", {d}, init::zeros(), rng);
  action_table_ = store_.declare("action_embed", {actions_ + 1, d}, init::uniform(1.0 / std::sqrt(static_cast<double>(d))), rng);
  blocks_.clear();
  for (std::size_t i = 0; i < config_.transformer.n_layers; ++i) {
    blocks_.push_back(BlockParams::declare(store_, "block" + std::to_string(i), config_.transformer, rng));
  }
  final_gain_ = store_.declare("final_ln.gain", {d}, init::constant(1.0), rng);
  final_bias_ = store_.declare("final_ln.bias", {d}, init::zeros(), rng);
  head_weight_ = store_.declare("action_head.weight", {d, actions_}, init::xavier_uniform(), rng);
  head_bias_ = store_.declare("action_head.bias", {actions_}, init::zeros(), rng);
}

TokenSequence DecisionTransformer::build_token_sequence(const DTWindow& w) const {
  const std::size_t b = w.batch, k = w.length, d = config_.transformer.d_model;
  if (b == 0 || k == 0) throw DimensionError("DT: empty window");
  if (k > config_.transformer.context_len) {
    throw DimensionError("DT: window of " + std::to_string(k) + " timesteps exceeds context length " +
                         std::to_string(config_.transformer.context_len));
  }
  if (!(w.shape == shape_) || w.observations.size() != b * k * shape_.size() || w.rtg.size() != b * k ||
      w.actions.size() != b * k) {
    throw DimensionError("DT: window arrays do not match [" + std::to_string(b) + "x" + std::to_string(k) + "]");
  }
  for (std::size_t a : w.actions) {
    if (a > actions_) throw IndexError("DT: action token " + std::to_string(a) + " outside [0, " + std::to_string(actions_) + "]");
  }
  std::vector<double> scaled(w.rtg.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = w.rtg[i] / config_.rtg_scale;
  const Tensor pe = positional_encoding(k, d);
  const Tensor rtg_tokens = add(linear(Tensor({b, k, 1}, std::move(scaled)), rtg_weight_, rtg_bias_), pe);
  const Tensor frames({b, k, shape_.channels, shape_.height, shape_.width}, w.observations);
  const Tensor state_tokens = add(encode_observations(frames, encoder_), pe);
  const Tensor action_tokens = add(reshape(take_rows(action_table_, w.actions), {b, k, d}), pe);
  TokenSequence seq;
  seq.tokens = reshape(stack({rtg_tokens, state_tokens, action_tokens}, 2), {b, 3 * k, d});
  for (std::size_t t = 0; t < k; ++t) seq.prediction_slots.push_back(3 * t + 1);
  return seq;
}

Tensor DecisionTransformer::forward(const DTWindow& w) const {
  const std::size_t b = w.batch, k = w.length, d = config_.transformer.d_model;
  Tensor h = build_token_sequence(w).tokens;
  const AttentionMask mask = causal_mask(3 * k);
  for (const auto& block : blocks_) h = transformer_block(h, block, config_.transformer, &mask);
  h = layernorm(h, final_gain_, final_bias_);
  const Tensor states = select(reshape(h, {b, k, 3, d}), 2, 1);
  return linear(states, head_weight_, head_bias_);
}

Tensor dt_forward(const DecisionTransformer& model, const DTWindow& window) {
  if (window.batch != 1) throw DimensionError("dt_forward: expected a single window");
  const Tensor logits = model.forward(window);
  return reshape(logits, {window.length, model.action_count()});
}

Tensor dt_loss(const Tensor& logits, std::span<const std::size_t> actions, std::span<const std::uint8_t> mask) {
  const std::size_t a = logits.size(logits.rank() - 1), slots = logits.numel() / a;
  if (actions.size() != slots || mask.size() != slots) {
    throw DimensionError("dt_loss: logits have " + std::to_string(slots) + " slots but actions/mask have " +
                         std::to_string(actions.size()) + "/" + std::to_string(mask.size()));
  }
  std::vector<std::size_t> rows, targets;
  for (std::size_t k = 0; k < slots; ++k) {
    if (!mask[k]) continue;
    rows.push_back(k);
    targets.push_back(actions[k]);
  }
  if (rows.empty()) throw StateError("dt_loss over an all-masked window");
  return cross_entropy(take_rows(reshape(logits, {slots, a}), rows), targets);
}

DTWindow make_window(const Trajectory& trajectory, ObsShape shape, std::size_t start, std::size_t length,
                     double gamma) {
  const std::size_t n = shape.size(), len = trajectory.length();
  if (start >= len) throw IndexError("make_window: start " + std::to_string(start) + " beyond trajectory of length " + std::to_string(len));
  if (trajectory.observations.size() != len * n) throw DimensionError("make_window: trajectory observations do not match shape");
  const std::vector<double> rtg = compute_rtg(trajectory.rewards, gamma);
  DTWindow w;
  w.batch = 1;
  w.length = length;
  w.shape = shape;
  w.rtg.assign(length, 0.0);
  w.observations.assign(length * n, 0.0);
  w.actions.assign(length, 0);
  w.mask.assign(length, 0);
  for (std::size_t t = 0; t < length; ++t) {
    const std::size_t src = start + t;
    if (src >= len) continue;
    w.rtg[t] = rtg[src];
    std::copy(trajectory.observations.begin() + static_cast<std::ptrdiff_t>(src * n),
              trajectory.observations.begin() + static_cast<std::ptrdiff_t>((src + 1) * n),
              w.observations.begin() + static_cast<std::ptrdiff_t>(t * n));
    w.actions[t] = trajectory.actions[src];
    w.mask[t] = 1;
  }
  return w;
}

DTWindow concat_windows(const std::vector<DTWindow>& windows) {
  if (windows.empty()) throw DimensionError("concat_windows: no windows");
  DTWindow out;
  out.length = windows.front().length;
  out.shape = windows.front().shape;
  for (const auto& w : windows) {
    if (w.length != out.length || !(w.shape == out.shape)) throw DimensionError("concat_windows: windows differ in shape");
    out.batch += w.batch;
    out.rtg.insert(out.rtg.end(), w.rtg.begin(), w.rtg.end());
    out.observations.insert(out.observations.end(), w.observations.begin(), w.observations.end());
    out.actions.insert(out.actions.end(), w.actions.begin(), w.actions.end());
    out.mask.insert(out.mask.end(), w.mask.begin(), w.mask.end());
  }
  return out;
}

DTTrainResult train_dt(DecisionTransformer& model, const Dataset& dataset, const DTConfig& config,
                       const MetricsSink& sink) {
  config.validate();
  if (!(dataset.shape == model.observation_shape()) || dataset.action_count != model.action_count()) {
    throw DimensionError("train_dt: dataset does not match the model's observation/action spaces");
  }
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
    if (dataset.trajectories[i].length() > 0) usable.push_back(i);
  }
  if (usable.empty()) throw StateError("train_dt: dataset holds no non-empty trajectories");
  const std::size_t context = config.transformer.context_len;
  std::vector<Tensor> params = model.params().tensors();
  AdamState adam = make_adam_state(params, config.adam);
  Rng rng(config.seed);
  DTTrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::size_t longest = 0;
      for (std::size_t i = begin; i < end; ++i) longest = std::max(longest, dataset.trajectories[order[i]].length());
      const std::size_t k = std::min(context, longest);
      std::vector<DTWindow> windows;
      for (std::size_t i = begin; i < end; ++i) {
        const Trajectory& t = dataset.trajectories[order[i]];
        const std::size_t start = t.length() > k ? static_cast<std::size_t>(rng.below(t.length() - k + 1)) : 0;
        windows.push_back(make_window(t, dataset.shape, start, k, config.gamma));
      }
      const DTWindow batch = concat_windows(windows);
      const Tensor loss = dt_loss(model.forward(batch), batch.actions, batch.mask);
      loss_sum += loss.item();
      ++batches;
      model.params().zero_grad();
      loss.backward();
      if (config.grad_clip > 0.0) clip_grad_norm(params, config.grad_clip);
      adam_step(params, adam);
      ++result.gradient_steps;
    }
    const double epoch_loss = loss_sum / static_cast<double>(batches);
    result.epoch_losses.push_back(epoch_loss);
    if (sink) {
      MetricsRow row;
      row.step = static_cast<std::int64_t>(epoch + 1);
      row.loss = epoch_loss;
      sink(row);
    }
  }
  return result;
}

void DTPolicy::begin_episode(const Observation&) {
  rtg_ = target_return_;
  rtgs_.clear();
  observations_.clear();
  actions_.clear();
}

std::size_t DTPolicy::act(const Observation& obs, Rng& rng) {
  const std::size_t context = model_.config().transformer.context_len, placeholder = model_.action_count();
  observations_.push_back(obs);
  rtgs_.push_back(rtg_);
  actions_.push_back(placeholder);
  while (observations_.size() > context) {
    observations_.pop_front();
    rtgs_.pop_front();
    actions_.pop_front();
  }
  const ObsShape shape = model_.observation_shape();
  DTWindow w;
  w.batch = 1;
  w.length = observations_.size();
  w.shape = shape;
  w.rtg.assign(rtgs_.begin(), rtgs_.end());
  w.actions.assign(actions_.begin(), actions_.end());
  w.mask.assign(w.length, 1);
  for (const auto& o : observations_) w.observations.insert(w.observations.end(), o.planes.begin(), o.planes.end());
  std::vector<double> logits;
  {
    NoGradGuard guard;
    const Tensor all = model_.forward(w);
    const auto data = all.data();
    logits.assign(data.end() - static_cast<std::ptrdiff_t>(placeholder), data.end());
  }
  const double temperature = model_.config().temperature;
  if (temperature > 0.0) {
    for (double& l : logits) l /= temperature;
  }
  const std::size_t action = temperature > 0.0 ? sample_categorical(logits, rng) : argmax(logits);
  actions_.back() = action;
  return action;
}

void DTPolicy::observe(const StepResult& result) { rtg_ -= result.reward; }

DTRolloutResult dt_rollout(Environment& env, const DecisionTransformer& model, double target_return,
                           std::size_t max_steps, std::size_t frame_skip, std::uint64_t seed) {
  if (!std::isfinite(target_return)) throw NumericError("dt_rollout: target return must be finite");
  DTPolicy policy(model, target_return);
  Rng rng(seed ^ 0x5bd1e995ULL);
  EpisodeRecord e = run_episode(env, policy, seed, frame_skip, rng, true, max_steps);
  DTRolloutResult out;
  out.episode_return = e.episode_return;
  out.timeout = e.timeout;
  for (const auto& o : e.observations) out.trajectory.observations.insert(out.trajectory.observations.end(), o.planes.begin(), o.planes.end());
  out.trajectory.actions = std::move(e.actions);
  out.trajectory.rewards = std::move(e.rewards);
  return out;
}

}  // namespace seqrl
