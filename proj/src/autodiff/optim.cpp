// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/autodiff/optim.hpp"

#include <cmath>

namespace fgrnn::ad {

template <typename T>
void adam_step(AdamState<T>& state, ParameterSet<T>& params) {
  for (const auto& p : params.all()) {
    if (!p->trainable) continue;
    for (T g : p->grad.values()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(p->name);
    }
  }
  const auto& cfg = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  for (const auto& p : params.all()) {
    if (!p->trainable) continue;
    auto& m = state.first_moment[p->name];
    auto& v = state.second_moment[p->name];
    if (m.size() != p->value.size()) m = Tensor<T>::zeros_like(p->value);
    if (v.size() != p->value.size()) v = Tensor<T>::zeros_like(p->value);
    const bool has_grad = p->grad.size() == p->value.size();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T g = has_grad ? p->grad[i] : T{0};
      m[i] = b1 * m[i] + (T{1} - b1) * g;
      v[i] = b2 * v[i] + (T{1} - b2) * g * g;
      const double m_hat = static_cast<double>(m[i]) / correction1;
      const double v_hat = static_cast<double>(v[i]) / correction2;
      p->value[i] -= static_cast<T>(cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

template <typename T>
double clip_global_norm(ParameterSet<T>& params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params.all()) {
    if (!p->trainable) continue;
    for (T g : p->grad.values()) total += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const T factor = static_cast<T>(max_norm / norm);
    for (const auto& p : params.all()) {
      if (!p->trainable) continue;
      for (auto& g : p->grad.values()) g *= factor;
    }
  }
  return norm;
}

template <typename T>
Tensor<T> sample_dropout_mask(const Shape& shape, double rate, CounterRng& rng, bool training) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  Tensor<T> mask(shape, T{1});
  if (!training || rate == 0.0) return mask;
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& v : mask.values()) v = rng.uniform() < rate ? T{0} : keep;
  return mask;
}

template void adam_step(AdamState<float>&, ParameterSet<float>&);
template void adam_step(AdamState<double>&, ParameterSet<double>&);
template double clip_global_norm(ParameterSet<float>&, double);
template double clip_global_norm(ParameterSet<double>&, double);
template Tensor<float> sample_dropout_mask(const Shape&, double, CounterRng&, bool);
template Tensor<double> sample_dropout_mask(const Shape&, double, CounterRng&, bool);

}  // namespace fgrnn::ad
