#include <cmath>

#include "spinal/optim.hpp"

namespace spinal {

AdamState adam_init(const nn::ParamMap& params, AdamConfig hyper) {
  AdamState state;
  state.hyper = hyper;
  for (const auto& [name, tensor] : params) {
    state.first_moment[name] = Tensor(tensor.shape());
    state.second_moment[name] = Tensor(tensor.shape());
  }
  return state;
}

void adam_step(nn::ParamMap& params, const nn::ParamMap& grads,
               AdamState& state) {
  const AdamConfig& h = state.hyper;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (auto& [name, param] : params) {
    auto git = grads.find(name);
    check(git != grads.end(), "adam_step: missing gradient for " + name);
    const Tensor& g = git->second;
    check(g.same_shape(param), "adam_step: gradient shape mismatch for " + name);
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    auto ma = m.flat();
    auto va = v.flat();
    ma = h.beta1 * ma + (1.0 - h.beta1) * g.flat();
    va = h.beta2 * va + (1.0 - h.beta2) * g.flat().square();
    param.flat() -= (h.lr / bc1) * ma / ((va / bc2).sqrt() + h.eps);
  }
}

}  // namespace spinal
