// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/fp/fixation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fgrnn::fp {

namespace {

constexpr double kLow = 1.96;
constexpr double kSpan = 3.92;

bool counted(std::span<const std::uint8_t> mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

/// Per-token weight 1/(Var + eps), or 0 for masked and infinite-variance tokens.
std::vector<double> token_weights(const FixationTarget& target, double epsilon, std::size_t* contributing) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("variance_weighted_mse: epsilon must be positive");
  target.validate();
  std::vector<double> w(target.size(), 0.0);
  *contributing = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!counted(target.mask, i) || std::isinf(target.variance[i])) continue;
    w[i] = 1.0 / (target.variance[i] + epsilon);
    ++*contributing;
  }
  return w;
}

}  // namespace

DurationBatchStats duration_stats(std::span<const double> dhat, std::span<const std::uint8_t> mask, int components,
                                  double std_floor) {
  if (!mask.empty() && mask.size() != dhat.size()) throw std::invalid_argument("duration_stats: mask length mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < dhat.size(); ++i) {
    if (!counted(mask, i)) continue;
    sum += dhat[i];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("duration_stats: no unmasked positions");
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < dhat.size(); ++i) {
    if (counted(mask, i)) var += (dhat[i] - mean) * (dhat[i] - mean);
  }
  var /= static_cast<double>(n);
  return {mean, std::max(std::sqrt(var), std_floor), components};
}

double normalize_duration(double dhat, const DurationBatchStats& stats) {
  return ((dhat - stats.mean) / stats.stddev + kLow) / kSpan * static_cast<double>(stats.components);
}

std::vector<double> normalize_durations(std::span<const double> dhat, const DurationBatchStats& stats) {
  std::vector<double> out;
  out.reserve(dhat.size());
  for (double d : dhat) out.push_back(normalize_duration(d, stats));
  return out;
}

template <typename T>
Var normalize_durations(Graph<T>& g, Var dhat, std::span<const std::uint8_t> mask, int components, T std_floor) {
  const T k = static_cast<T>(components);
  Var z = g.standardize(dhat, mask, std_floor);
  return g.affine_scalar(z, k / static_cast<T>(kSpan), static_cast<T>(kLow) * k / static_cast<T>(kSpan));
}

void FixationTarget::validate() const {
  if (variance.size() != expectation.size() || (!mask.empty() && mask.size() != expectation.size())) {
    throw std::invalid_argument("fixation target arrays differ in length");
  }
  for (double v : variance) {
    if (std::isnan(v) || (std::isfinite(v) && v < 0.0)) {
      throw std::invalid_argument("fixation target variance must be >= 0 or infinite");
    }
  }
}

double variance_weighted_mse(std::span<const double> predictions, const FixationTarget& target, double epsilon,
                             Reduction reduction) {
  if (predictions.size() != target.size()) throw std::invalid_argument("variance_weighted_mse: length mismatch");
  std::size_t n = 0;
  const auto w = token_weights(target, epsilon, &n);
  double loss = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double d = target.expectation[i] - predictions[i];
    loss += d * d * w[i];
  }
  if (reduction == Reduction::kMean && n > 0) loss /= static_cast<double>(n);
  return loss;
}

template <typename T>
Var variance_weighted_mse(Graph<T>& g, Var predictions, const FixationTarget& target, T epsilon, Reduction reduction) {
  const auto& pv = g.value(predictions);
  if (pv.size() != target.size()) {
    throw ad::ShapeError("variance_weighted_mse: " + std::to_string(target.size()) + " targets for predictions " +
                         ad::shape_string(pv.shape()));
  }
  std::size_t n = 0;
  const auto w = token_weights(target, static_cast<double>(epsilon), &n);
  ad::Tensor<T> expect(pv.shape());
  ad::Tensor<T> weight(pv.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    // Excluded tokens compare against their own prediction so the
    // difference is exactly zero.
    expect[i] = w[i] == 0.0 ? pv[i] : static_cast<T>(target.expectation[i]);
    weight[i] = static_cast<T>(w[i]);
  }
  if (reduction == Reduction::kMean && n > 0) {
    for (auto& v : weight.values()) v /= static_cast<T>(n);
  }
  Var diff = g.sub(predictions, g.constant(std::move(expect)));
  return g.sum(g.mul(g.mul(diff, diff), g.constant(std::move(weight))));
}

double joint_loss(double task_loss, double fixation_loss, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("joint_loss: lambda must be >= 0");
  return task_loss + lambda * fixation_loss;
}

template <typename T>
Var joint_loss(Graph<T>& g, Var task_loss, Var fixation_loss, T lambda) {
  if (!(lambda >= T{0})) throw std::invalid_argument("joint_loss: lambda must be >= 0");
  return g.add(task_loss, g.scale(fixation_loss, lambda));
}

#define FGRNN_INSTANTIATE_FP(T)                                                                          \
  template Var normalize_durations(Graph<T>&, Var, std::span<const std::uint8_t>, int, T);               \
  template Var variance_weighted_mse(Graph<T>&, Var, const FixationTarget&, T, Reduction);               \
  template Var joint_loss(Graph<T>&, Var, Var, T);

FGRNN_INSTANTIATE_FP(float)
FGRNN_INSTANTIATE_FP(double)

}  // namespace fgrnn::fp
