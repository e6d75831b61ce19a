// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fgrnn/autodiff/tensor.hpp"
#include "fgrnn/rng.hpp"

namespace fgrnn::ad {

/// Named leaf tensor with its gradient accumulator. Parameters are held by
/// shared_ptr so two models can own the same storage (shared embeddings,
/// tied output weights).
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

template <typename T>
using ParamRef = std::shared_ptr<Parameter<T>>;

enum class Init {
  kZeros,
  kUniformFanIn,  // U(-1/sqrt(fan_in), +1/sqrt(fan_in)), fan_in = last dim
};

/// Ordered collection of parameters. Iteration order is insertion order,
/// which fixes checkpoint layout and initialization draws.
template <typename T>
class ParameterSet {
 public:
  ParamRef<T> create(const std::string& name, Shape shape, Init init, CounterRng& rng);

  /// Registers an existing parameter (e.g. one shared with another model).
  void add(const ParamRef<T>& param);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const ParamRef<T>& get(const std::string& name) const;
  const std::vector<ParamRef<T>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  void zero_grad();
  std::map<std::string, Tensor<T>> gradients() const;

  std::size_t numel(const std::function<bool(const Parameter<T>&)>& filter = {}) const;

  void set_trainable(bool trainable);

 private:
  std::vector<ParamRef<T>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Order-sensitive checksum over names, shapes and raw value bytes.
template <typename T>
std::uint64_t checksum(const ParameterSet<T>& params);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace fgrnn::ad
