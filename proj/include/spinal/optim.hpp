#pragma once

#include "spinal/nn.hpp"

namespace spinal {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long step_count = 0;
  AdamConfig hyper;
  nn::ParamMap first_moment;
  nn::ParamMap second_moment;
};

AdamState adam_init(const nn::ParamMap& params, AdamConfig hyper = {});

// Bias-corrected elementwise Adam update. `grads` must carry a tensor for
// every parameter key.
void adam_step(nn::ParamMap& params, const nn::ParamMap& grads,
               AdamState& state);

}  // namespace spinal
