// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fgrnn::data {

/// Variable-length sequences padded to a common length, stored time-major:
/// position (t, b) lives at index t * batch + b. Padding positions carry
/// id `pad` and mask 0.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;
  std::vector<std::size_t> lengths;  // per row

  std::size_t index(std::size_t t, std::size_t b) const { return t * batch + b; }
  std::span<const std::int32_t> step_ids(std::size_t t) const { return {ids.data() + t * batch, batch}; }
  std::size_t token_count() const;
};

TokenBatch pack_sequences(std::span<const std::vector<std::int32_t>> rows, std::int32_t pad = 0);

/// Per-position values from a time-major [length * batch] array, row by row,
/// dropping padding.
template <typename V>
std::vector<std::vector<V>> unpack_rows(const TokenBatch& batch, std::span<const V> values) {
  std::vector<std::vector<V>> out(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t t = 0; t < batch.lengths[b]; ++t) out[b].push_back(values[batch.index(t, b)]);
  }
  return out;
}

}  // namespace fgrnn::data
