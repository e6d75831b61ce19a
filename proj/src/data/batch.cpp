// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/data/batch.hpp"

#include <algorithm>

namespace fgrnn::data {

std::size_t TokenBatch::token_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

TokenBatch pack_sequences(std::span<const std::vector<std::int32_t>> rows, std::int32_t pad) {
  TokenBatch out;
  out.batch = rows.size();
  for (const auto& r : rows) {
    out.length = std::max(out.length, r.size());
    out.lengths.push_back(r.size());
  }
  out.ids.assign(out.length * out.batch, pad);
  out.mask.assign(out.length * out.batch, 0);
  for (std::size_t b = 0; b < out.batch; ++b) {
    for (std::size_t t = 0; t < rows[b].size(); ++t) {
      out.ids[out.index(t, b)] = rows[b][t];
      out.mask[out.index(t, b)] = 1;
    }
  }
  return out;
}

}  // namespace fgrnn::data
