// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fgrnn/data/text.hpp"

namespace fgrnn::tasks {

/// Where gate values come from. kNone is used by vanilla models.
enum class GateSource { kNone, kHuman, kFixedFp, kAdaptive, kRandom, kRandomBt, kFull, kFreq };

std::string_view gate_source_name(GateSource s);
/// Accepts "none", "human", "fixed_fp", "adaptive", "random", "random_bt", "full", "freq".
GateSource parse_gate_source(std::string_view name);

enum class ArtificialKind { kRandom, kRandomBt, kFull, kFreq };

/// Accepts "random", "random_bt", "full", "freq"; anything else throws.
ArtificialKind parse_artificial_kind(std::string_view name);

/// Hard schedule for `tokens`:
///  Random   - i.i.d. uniform over {1..K} per position (fixed by seed)
///  RandomBT - one uniform draw per token type, shared by all occurrences
///  Full     - K everywhere
///  Freq     - types ranked by descending frequency (ties lexicographic) and
///             cut into K equal-count rank buckets; the most frequent bucket
///             gets 1. Types missing from the table get K.
std::vector<int> artificial_fixations(ArtificialKind kind, std::span<const std::string> tokens, int levels,
                                      std::uint64_t seed, const data::FrequencyTable* frequencies = nullptr);

/// Bucket (1..K) of every type in the table under the Freq rule.
std::vector<std::pair<std::string, int>> frequency_buckets(const data::FrequencyTable& frequencies, int levels);

}  // namespace fgrnn::tasks
