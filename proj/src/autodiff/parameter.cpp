// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/autodiff/parameter.hpp"

#include <cmath>
#include <cstring>
#include <string_view>

namespace fgrnn::ad {

template <typename T>
ParamRef<T> ParameterSet<T>::create(const std::string& name, Shape shape, Init init, CounterRng& rng) {
  auto param = std::make_shared<Parameter<T>>();
  param->name = name;
  param->value = Tensor<T>(std::move(shape));
  if (init == Init::kUniformFanIn) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(param->value.cols()));
    for (auto& v : param->value.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  add(param);
  return param;
}

template <typename T>
void ParameterSet<T>::add(const ParamRef<T>& param) {
  if (!param) throw std::invalid_argument("ParameterSet::add: null parameter");
  auto [it, inserted] = index_.emplace(param->name, params_.size());
  if (!inserted) {
    if (params_[it->second] == param) return;
    throw std::invalid_argument("duplicate parameter name '" + param->name + "'");
  }
  params_.push_back(param);
}

template <typename T>
const ParamRef<T>& ParameterSet<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) {
    if (p->grad.size() != p->value.size()) {
      p->grad = Tensor<T>::zeros_like(p->value);
    } else {
      p->grad.fill(T{0});
    }
  }
}

template <typename T>
std::map<std::string, Tensor<T>> ParameterSet<T>::gradients() const {
  std::map<std::string, Tensor<T>> out;
  for (const auto& p : params_) {
    out.emplace(p->name, p->grad.empty() ? Tensor<T>::zeros_like(p->value) : p->grad);
  }
  return out;
}

template <typename T>
std::size_t ParameterSet<T>::numel(const std::function<bool(const Parameter<T>&)>& filter) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (!filter || filter(*p)) n += p->value.size();
  }
  return n;
}

template <typename T>
void ParameterSet<T>::set_trainable(bool trainable) {
  for (auto& p : params_) p->trainable = trainable;
}

template <typename T>
std::uint64_t checksum(const ParameterSet<T>& params) {
  std::uint64_t h = fnv1a64("");
  for (const auto& p : params.all()) {
    h = fnv1a64(p->name, h);
    h = fnv1a64(shape_string(p->value.shape()), h);
    const auto* bytes = reinterpret_cast<const char*>(p->value.data());
    h = fnv1a64(std::string_view(bytes, p->value.size() * sizeof(T)), h);
  }
  return h;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template std::uint64_t checksum(const ParameterSet<float>&);
template std::uint64_t checksum(const ParameterSet<double>&);

}  // namespace fgrnn::ad
