#include "docir/autodiff/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace docir::ad {

template <class T>
double global_grad_norm(std::span<Tensor<T>* const> params) {
  double sq = 0;
  for (const Tensor<T>* p : params) {
    for (T g : p->grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

template <class T>
double adam_step(std::span<Tensor<T>* const> params, OptimState<T>& state) {
  if (state.first_moment.empty()) {
    for (const Tensor<T>* p : params) {
      state.first_moment.emplace_back(p->size(), T(0));
      state.second_moment.emplace_back(p->size(), T(0));
    }
  }
  if (state.first_moment.size() != params.size()) throw std::invalid_argument("adam_step: parameter count changed");

  for (Tensor<T>* p : params) p->grad();  // parameters that received no gradient count as zero
  const double norm = global_grad_norm<T>(params);
  const auto& c = state.config;
  if (c.max_grad_norm > 0 && norm > c.max_grad_norm) {
    const T factor = static_cast<T>(c.max_grad_norm / norm);
    for (Tensor<T>* p : params) {
      for (T& g : p->grad()) g *= factor;
    }
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != p.size()) throw std::invalid_argument("adam_step: moment shape mismatch");
    auto g = p.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= static_cast<T>(c.lr * m_hat / (std::sqrt(v_hat) + c.eps));
    }
  }
  return norm;
}

template <class T>
double adam_step(ParamStore<T>& store, OptimState<T>& state) {
  std::vector<Tensor<T>*> params;
  for (auto& e : store.entries()) params.push_back(&e.tensor);
  return adam_step<T>(std::span<Tensor<T>* const>(params), state);
}

template double global_grad_norm<float>(std::span<Tensor<float>* const>);
template double global_grad_norm<double>(std::span<Tensor<double>* const>);
template double adam_step<float>(std::span<Tensor<float>* const>, OptimState<float>&);
template double adam_step<double>(std::span<Tensor<double>* const>, OptimState<double>&);
template double adam_step<float>(ParamStore<float>&, OptimState<float>&);
template double adam_step<double>(ParamStore<double>&, OptimState<double>&);

}  // namespace docir::ad
