// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "fgrnn/autodiff/parameter.hpp"
#include "fgrnn/rng.hpp"

namespace fgrnn::ad {

/// Raised when a gradient holds NaN/Inf; no parameter has been modified.
class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"), parameter(param) {}
  std::string parameter;
};

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moments keyed by parameter name.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Tensor<T>> first_moment;
  std::map<std::string, Tensor<T>> second_moment;
};

/// One bias-corrected Adam update over every trainable parameter, using
/// Parameter::grad. Non-trainable parameters are skipped.
template <typename T>
void adam_step(AdamState<T>& state, ParameterSet<T>& params);

/// Scales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_global_norm(ParameterSet<T>& params, double max_norm);

/// Inverted-dropout mask: 0 with probability `rate`, else 1/(1-rate).
/// Evaluation mode (training == false) returns all ones.
template <typename T>
Tensor<T> sample_dropout_mask(const Shape& shape, double rate, CounterRng& rng, bool training = true);

}  // namespace fgrnn::ad
