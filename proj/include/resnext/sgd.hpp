// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "resnext/network.hpp"

namespace resnext {

template <typename T>
struct ParamSlot {
  std::string name;
  Tensor<T>* value;
  const Tensor<T>* grad;
  ParamKind kind;
};

template <typename T>
struct SgdState {
  std::vector<Tensor<T>> velocity;  // one per slot, zero until the first step
  std::size_t steps = 0;
};

/// Momentum SGD:
///   g' = grad + weight_decay * param   (Decayed slots only)
///   v  = momentum * v + g'
///   param -= lr * v
/// Buffer slots are skipped. Throws NonFiniteError naming the first slot
/// with a NaN/Inf gradient, before anything is modified.
template <typename T>
void sgd_step(std::span<ParamSlot<T>> slots, SgdState<T>& state, double lr, double momentum, double weight_decay);

/// Pairs every tensor of `params` with its counterpart in `grads`.
template <typename T>
std::vector<ParamSlot<T>> param_slots(NetworkParams<T>& params, NetworkParams<T>& grads);

}  // namespace resnext
