// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fgrnn/autodiff/graph.hpp"

namespace fgrnn::fp {

using ad::Graph;
using ad::Var;

inline constexpr double kDefaultStdFloor = 1e-5;
inline constexpr double kDefaultEpsilon = 0.1;
inline constexpr double kDefaultSteepness = 4.0;

/// Batch statistics of predicted durations over non-padding positions.
struct DurationBatchStats {
  double mean = 0.0;
  double stddev = 1.0;  // population, floored
  int components = 1;
};

/// Empty `mask` means every position counts.
DurationBatchStats duration_stats(std::span<const double> dhat, std::span<const std::uint8_t> mask, int components,
                                  double std_floor = kDefaultStdFloor);

/// dbar = ((dhat - mean) / std + 1.96) / 3.92 * K. Values are not clamped.
double normalize_duration(double dhat, const DurationBatchStats& stats);
std::vector<double> normalize_durations(std::span<const double> dhat, const DurationBatchStats& stats);

/// Graph form over a column dhat [N,1]; statistics come from the same
/// batch, restricted to `mask`. Masked positions map to K/2.
template <typename T>
Var normalize_durations(Graph<T>& g, Var dhat, std::span<const std::uint8_t> mask, int components,
                        T std_floor = static_cast<T>(kDefaultStdFloor));

/// Per-token fixation target. Infinite variance marks tokens that carry no
/// supervision (punctuation); mask 0 marks padding.
struct FixationTarget {
  std::vector<double> expectation;
  std::vector<double> variance;
  std::vector<std::uint8_t> mask;  // empty = all valid

  std::size_t size() const { return expectation.size(); }
  void validate() const;
};

enum class Reduction { kSum, kMean };

/// Sum over tokens of (E - dhat)^2 / (Var + eps). Infinite-variance and
/// masked tokens contribute exactly 0. kMean divides by the number of
/// contributing tokens.
double variance_weighted_mse(std::span<const double> predictions, const FixationTarget& target, double epsilon,
                             Reduction reduction = Reduction::kSum);

template <typename T>
Var variance_weighted_mse(Graph<T>& g, Var predictions, const FixationTarget& target, T epsilon,
                          Reduction reduction = Reduction::kSum);

/// L1 + lambda * L2.
double joint_loss(double task_loss, double fixation_loss, double lambda);

template <typename T>
Var joint_loss(Graph<T>& g, Var task_loss, Var fixation_loss, T lambda);

}  // namespace fgrnn::fp
