// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fgrnn/autodiff/parameter.hpp"

namespace fgrnn::ad {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Layout (all integers little-endian):
///   magic "FGRNNCK1" | u32 precision bytes (4|8)
///   u32 seed count | { u32 len, name bytes, u64 seed }*
///   u32 tensor count | { u32 len, name bytes, u32 rank, u64 dim*rank, values }*
/// Values are IEEE-754 binary32 or binary64 in little-endian byte order.
struct Checkpoint {
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> values;
  };
  std::uint32_t precision_bytes = 4;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<Entry> entries;

  const Entry* find(const std::string& name) const;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params,
                     const std::map<std::string, std::uint64_t>& seeds = {});

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies every tensor of `params` from the checkpoint (name and shape must
/// match). Extra checkpoint entries are ignored.
template <typename T>
void load_checkpoint(const Checkpoint& ckpt, ParameterSet<T>& params);

}  // namespace fgrnn::ad
