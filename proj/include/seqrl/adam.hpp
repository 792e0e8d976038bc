#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "seqrl/tensor.hpp"

namespace seqrl {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

AdamState make_adam_state(std::span<const Tensor> params, AdamConfig config = {});

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient (a missing gradient counts as zero). Increments `state.step`.
void adam_step(std::span<Tensor> params, AdamState& state);

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace seqrl
