#include "seqrl/adam.hpp"

#include <cmath>

#include "seqrl/error.hpp"

namespace seqrl {

AdamState make_adam_state(std::span<const Tensor> params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), 0.0);
    state.second_moment.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.first_moment.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but state tracks " +
                         std::to_string(state.first_moment.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].numel() != state.first_moment[i].size()) {
      throw DimensionError("adam_step: moment buffer does not match parameter " + std::to_string(i));
    }
    if (checked() && params[i].has_grad()) {
      for (double g : params[i].grad()) {
        if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i));
      }
    }
  }
  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].data_mut();
    const bool has_grad = params[i].has_grad();
    auto grads = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = has_grad ? grads[j] : 0.0;
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) total += g * g;
  }
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / (norm + 1e-12);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.grad_mut()) g *= factor;
    }
  }
  return norm;
}

}  // namespace seqrl
