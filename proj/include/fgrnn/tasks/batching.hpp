// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fgrnn/rng.hpp"

namespace fgrnn::tasks {

/// Segment length draw: N(base, 5) with probability 0.95, else N(base/2, 5),
/// rounded and clamped to [10, 2 * mean], where base = mean / 0.975 so the
/// mixture mean equals `mean`.
std::size_t sample_segment_length(CounterRng& rng, double mean);

struct Segment {
  std::size_t begin = 0;   // column offset inside every row
  std::size_t length = 0;
};

/// A contiguous token stream cut into `batch` parallel rows of equal length.
/// Row b holds stream[b*L, (b+1)*L); its targets are the same window shifted
/// by one token. Segments partition the columns [0, L) in order; state is
/// carried from one segment to the next and truncated for gradients.
struct BatchPlan {
  std::size_t batch = 0;
  std::size_t row_length = 0;
  std::vector<std::vector<std::int32_t>> rows;
  std::vector<std::vector<std::int32_t>> targets;
  std::vector<Segment> segments;
  bool carry_state = true;

  /// Time-major inputs / targets of segment i: index t * batch + b.
  std::vector<std::int32_t> inputs(std::size_t i) const;
  std::vector<std::int32_t> segment_targets(std::size_t i) const;
  /// Stream position of (segment i, step t, row b).
  std::size_t stream_position(std::size_t i, std::size_t t, std::size_t b) const {
    return b * row_length + segments[i].begin + t;
  }
  std::size_t token_count() const { return batch * row_length; }
};

/// Randomized segment lengths (training). Requires more than `batch` tokens.
BatchPlan make_batches(std::span<const std::int32_t> stream, std::size_t batch, double mean_length,
                       std::uint64_t seed);
/// Fixed segment length (evaluation).
BatchPlan make_fixed_batches(std::span<const std::int32_t> stream, std::size_t batch, std::size_t length);

}  // namespace fgrnn::tasks
