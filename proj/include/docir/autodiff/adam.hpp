#pragma once

#include <span>
#include <vector>

#include "docir/autodiff/param_store.hpp"

namespace docir::ad {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip applied before the update; <= 0 disables.
  double max_grad_norm = 0.5;
};

template <class T>
struct OptimState {
  AdamConfig config;
  long step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

/// Norm over the concatenation of all gradients.
template <class T>
double global_grad_norm(std::span<Tensor<T>* const> params);

/// One bias-corrected adaptive-moment update. Gradients are clipped in place
/// first. Returns the gradient norm before clipping.
template <class T>
double adam_step(std::span<Tensor<T>* const> params, OptimState<T>& state);

/// Convenience over all entries of a store.
template <class T>
double adam_step(ParamStore<T>& store, OptimState<T>& state);

}  // namespace docir::ad
