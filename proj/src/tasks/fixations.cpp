// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/tasks/fixations.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <stdexcept>

#include "fgrnn/rng.hpp"

namespace fgrnn::tasks {

namespace {

constexpr std::array<std::pair<GateSource, std::string_view>, 8> kSources = {{
    {GateSource::kNone, "none"},
    {GateSource::kHuman, "human"},
    {GateSource::kFixedFp, "fixed_fp"},
    {GateSource::kAdaptive, "adaptive"},
    {GateSource::kRandom, "random"},
    {GateSource::kRandomBt, "random_bt"},
    {GateSource::kFull, "full"},
    {GateSource::kFreq, "freq"},
}};

}  // namespace

std::string_view gate_source_name(GateSource s) {
  for (const auto& [src, name] : kSources) {
    if (src == s) return name;
  }
  throw std::invalid_argument("unknown gate source");
}

GateSource parse_gate_source(std::string_view name) {
  for (const auto& [src, n] : kSources) {
    if (n == name) return src;
  }
  throw std::invalid_argument("unknown gate source '" + std::string(name) + "'");
}

ArtificialKind parse_artificial_kind(std::string_view name) {
  if (name == "random") return ArtificialKind::kRandom;
  if (name == "random_bt") return ArtificialKind::kRandomBt;
  if (name == "full") return ArtificialKind::kFull;
  if (name == "freq") return ArtificialKind::kFreq;
  throw std::invalid_argument("unknown artificial fixation kind '" + std::string(name) + "'");
}

std::vector<std::pair<std::string, int>> frequency_buckets(const data::FrequencyTable& frequencies, int levels) {
  if (levels < 1) throw std::invalid_argument("frequency_buckets: K must be >= 1");
  std::vector<std::pair<std::string, std::size_t>> ranked(frequencies.begin(), frequencies.end());
  // The map is already lexicographic, so a stable sort keeps ties in that order.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::pair<std::string, int>> out;
  const std::size_t n = ranked.size();
  for (std::size_t r = 0; r < n; ++r) {
    out.emplace_back(ranked[r].first, static_cast<int>(r * static_cast<std::size_t>(levels) / n) + 1);
  }
  return out;
}

std::vector<int> artificial_fixations(ArtificialKind kind, std::span<const std::string> tokens, int levels,
                                      std::uint64_t seed, const data::FrequencyTable* frequencies) {
  if (levels < 1) throw std::invalid_argument("artificial_fixations: K must be >= 1");
  std::vector<int> out;
  out.reserve(tokens.size());
  switch (kind) {
    case ArtificialKind::kFull:
      out.assign(tokens.size(), levels);
      break;
    case ArtificialKind::kRandom: {
      CounterRng rng(seed, "fixations.random");
      for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back(static_cast<int>(rng.uniform_int(1, levels)));
      break;
    }
    case ArtificialKind::kRandomBt:
      // One stream per type so a type's value does not depend on where it
      // first occurs.
      for (const auto& tok : tokens) {
        CounterRng rng(seed, "fixations.random_bt:" + tok);
        out.push_back(static_cast<int>(rng.uniform_int(1, levels)));
      }
      break;
    case ArtificialKind::kFreq: {
      if (!frequencies) throw std::invalid_argument("artificial_fixations: Freq needs a frequency table");
      std::map<std::string, int, std::less<>> bucket;
      for (auto& [tok, b] : frequency_buckets(*frequencies, levels)) bucket.emplace(std::move(tok), b);
      for (const auto& tok : tokens) {
        const auto it = bucket.find(tok);
        out.push_back(it == bucket.end() ? levels : it->second);
      }
      break;
    }
  }
  return out;
}

}  // namespace fgrnn::tasks
