#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnnkit/tensor.hpp"

namespace gnnkit {

// Bias-corrected Adam over a fixed parameter list.  Weight decay is classic
// L2 folded into the gradient and applied only to slots flagged for decay
// (transformation matrices, not biases or gate vectors).
template <class T>
struct AdamStateT {
  struct Slot {
    std::vector<T> m;
    std::vector<T> v;
    bool decay = false;
  };

  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;
  std::int64_t t = 0;
  std::vector<Slot> slots;

  void register_param(const TensorT<T>& p, bool decay) {
    slots.push_back(Slot{std::vector<T>(p.size(), T(0)),
                         std::vector<T>(p.size(), T(0)), decay});
  }
};

template <class T>
void adam_step(std::vector<TensorT<T>>& params, AdamStateT<T>& state) {
  if (params.size() != state.slots.size())
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) +
                                " params vs " +
                                std::to_string(state.slots.size()) + " slots");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t s = 0; s < params.size(); ++s) {
    auto& p = params[s];
    auto& slot = state.slots[s];
    if (slot.m.size() != p.size())
      throw std::invalid_argument("adam_step: slot " + std::to_string(s) +
                                  " shape mismatch");
    if (!p.has_grad()) continue;  // zero gradient: parameter unchanged
    const std::vector<T>& g = p.grad();
    T* w = p.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = static_cast<double>(g[i]);
      if (slot.decay) gi += state.weight_decay * static_cast<double>(w[i]);
      slot.m[i] = static_cast<T>(state.beta1 * slot.m[i] + (1.0 - state.beta1) * gi);
      slot.v[i] = static_cast<T>(state.beta2 * slot.v[i] + (1.0 - state.beta2) * gi * gi);
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      w[i] -= static_cast<T>(state.learning_rate * mhat /
                             (std::sqrt(vhat) + state.epsilon));
    }
  }
}

using AdamState = AdamStateT<double>;

}  // namespace gnnkit
