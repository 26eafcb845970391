// SPDX-License-Identifier: Apache-2.0
#include "resnext/sgd.hpp"

#include <cmath>

namespace resnext {

template <typename T>
void sgd_step(std::span<ParamSlot<T>> slots, SgdState<T>& state, double lr, double momentum, double weight_decay) {
  if (state.velocity.empty()) {
    for (const auto& s : slots) state.velocity.emplace_back(s.value->shape());
  }
  if (state.velocity.size() != slots.size())
    throw RejectedInputError("sgd_step: optimizer state has " + std::to_string(state.velocity.size()) +
                             " slots, got " + std::to_string(slots.size()));
  for (const auto& s : slots) {
    if (s.kind == ParamKind::Buffer) continue;
    if (s.grad->shape() != s.value->shape())
      throw RejectedInputError("sgd_step: gradient shape mismatch for " + s.name);
    for (std::size_t i = 0; i < s.grad->size(); ++i)
      if (!std::isfinite((*s.grad)[i]))
        throw NonFiniteError("non-finite gradient in " + s.name + " at index " + std::to_string(i));
  }
  const T m = static_cast<T>(momentum), rate = static_cast<T>(lr), wd = static_cast<T>(weight_decay);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto& s = slots[k];
    if (s.kind == ParamKind::Buffer) continue;
    auto& v = state.velocity[k];
    auto& p = *s.value;
    const auto& g = *s.grad;
    const bool decay = s.kind == ParamKind::Decayed && weight_decay != 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T gi = decay ? g[i] + wd * p[i] : g[i];
      v[i] = m * v[i] + gi;
      p[i] -= rate * v[i];
    }
  }
  ++state.steps;
}

template <typename T>
std::vector<ParamSlot<T>> param_slots(NetworkParams<T>& params, NetworkParams<T>& grads) {
  std::vector<ParamSlot<T>> slots;
  for_each_param(params, [&](const std::string& name, Tensor<T>& t, ParamKind kind) {
    slots.push_back({name, &t, nullptr, kind});
  });
  std::size_t i = 0;
  for_each_param(grads, [&](const std::string& name, Tensor<T>& t, ParamKind) {
    if (i >= slots.size() || slots[i].name != name)
      throw RejectedInputError("gradient layout does not match parameters at " + name);
    slots[i++].grad = &t;
  });
  if (i != slots.size()) throw RejectedInputError("gradient layout is missing tensors");
  return slots;
}

template void sgd_step<float>(std::span<ParamSlot<float>>, SgdState<float>&, double, double, double);
template void sgd_step<double>(std::span<ParamSlot<double>>, SgdState<double>&, double, double, double);
template std::vector<ParamSlot<float>> param_slots<float>(NetworkParams<float>&, NetworkParams<float>&);
template std::vector<ParamSlot<double>> param_slots<double>(NetworkParams<double>&, NetworkParams<double>&);

}  // namespace resnext
