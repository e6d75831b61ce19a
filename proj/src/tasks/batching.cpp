// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/tasks/batching.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fgrnn::tasks {

namespace {

constexpr double kLongProbability = 0.95;
constexpr double kLengthSd = 5.0;
constexpr double kMinLength = 10.0;

BatchPlan layout(std::span<const std::int32_t> stream, std::size_t batch) {
  if (batch == 0) throw std::invalid_argument("batching: batch size must be positive");
  if (stream.size() <= batch) {
    throw std::invalid_argument("batching: stream of " + std::to_string(stream.size()) +
                                " tokens is too short for batch size " + std::to_string(batch));
  }
  BatchPlan plan;
  plan.batch = batch;
  plan.row_length = (stream.size() - 1) / batch;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto begin = stream.begin() + static_cast<std::ptrdiff_t>(b * plan.row_length);
    plan.rows.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(plan.row_length));
    plan.targets.emplace_back(begin + 1, begin + 1 + static_cast<std::ptrdiff_t>(plan.row_length));
  }
  return plan;
}

std::vector<std::int32_t> gather(const std::vector<std::vector<std::int32_t>>& rows, const Segment& s) {
  std::vector<std::int32_t> out(s.length * rows.size());
  for (std::size_t t = 0; t < s.length; ++t) {
    for (std::size_t b = 0; b < rows.size(); ++b) out[t * rows.size() + b] = rows[b][s.begin + t];
  }
  return out;
}

}  // namespace

std::size_t sample_segment_length(CounterRng& rng, double mean) {
  if (!(mean >= kMinLength)) throw std::invalid_argument("segment mean length must be >= 10");
  const double base = mean / (kLongProbability + (1.0 - kLongProbability) / 2.0);
  const double centre = rng.bernoulli(kLongProbability) ? base : base / 2.0;
  const double draw = std::round(rng.normal(centre, kLengthSd));
  return static_cast<std::size_t>(std::clamp(draw, kMinLength, std::round(2.0 * mean)));
}

std::vector<std::int32_t> BatchPlan::inputs(std::size_t i) const { return gather(rows, segments.at(i)); }
std::vector<std::int32_t> BatchPlan::segment_targets(std::size_t i) const { return gather(targets, segments.at(i)); }

BatchPlan make_batches(std::span<const std::int32_t> stream, std::size_t batch, double mean_length,
                       std::uint64_t seed) {
  auto plan = layout(stream, batch);
  CounterRng rng(seed, "batching.lengths");
  for (std::size_t pos = 0; pos < plan.row_length;) {
    const std::size_t len = std::min(sample_segment_length(rng, mean_length), plan.row_length - pos);
    plan.segments.push_back({pos, len});
    pos += len;
  }
  return plan;
}

BatchPlan make_fixed_batches(std::span<const std::int32_t> stream, std::size_t batch, std::size_t length) {
  if (length == 0) throw std::invalid_argument("batching: segment length must be positive");
  auto plan = layout(stream, batch);
  for (std::size_t pos = 0; pos < plan.row_length; pos += length) {
    plan.segments.push_back({pos, std::min(length, plan.row_length - pos)});
  }
  return plan;
}

}  // namespace fgrnn::tasks
