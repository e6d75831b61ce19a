// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/autodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace fgrnn::ad {

namespace {

constexpr char kMagic[8] = {'F', 'G', 'R', 'N', 'N', 'C', 'K', '1'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  }
  void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }
  template <typename U>
  void uint(U value) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
    bytes(buf, sizeof(U));
  }
  void string(const std::string& s) {
    uint<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void finish() {
    out_.flush();
    if (!out_) throw CheckpointError("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw CheckpointError("cannot open '" + path.string() + "'");
  }
  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) throw CheckpointError("truncated checkpoint");
  }
  template <typename U>
  U uint() {
    unsigned char buf[sizeof(U)];
    bytes(buf, sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(buf[i]) << (8 * i);
    return value;
  }
  std::string string() {
    const auto n = uint<std::uint32_t>();
    if (n > (1u << 20)) throw CheckpointError("implausible name length in checkpoint");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::ifstream in_;
};

}  // namespace

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params,
                     const std::map<std::string, std::uint64_t>& seeds) {
  Writer w(path);
  w.bytes(kMagic, sizeof(kMagic));
  w.uint<std::uint32_t>(sizeof(T));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(seeds.size()));
  for (const auto& [name, seed] : seeds) {
    w.string(name);
    w.uint<std::uint64_t>(seed);
  }
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (const auto& p : params.all()) {
    w.string(p->name);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) w.uint<std::uint64_t>(d);
    for (T v : p->value.values()) w.uint<Bits>(std::bit_cast<Bits>(v));
  }
  w.finish();
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a checkpoint: bad magic");
  Checkpoint ckpt;
  ckpt.precision_bytes = r.uint<std::uint32_t>();
  if (ckpt.precision_bytes != 4 && ckpt.precision_bytes != 8) {
    throw CheckpointError("unsupported checkpoint precision " + std::to_string(ckpt.precision_bytes));
  }
  const auto n_seeds = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_seeds; ++i) {
    auto name = r.string();
    ckpt.seeds[name] = r.uint<std::uint64_t>();
  }
  const auto n_tensors = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    Checkpoint::Entry e;
    e.name = r.string();
    const auto rank = r.uint<std::uint32_t>();
    if (rank == 0 || rank > 2) throw CheckpointError("bad rank for '" + e.name + "'");
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.uint<std::uint64_t>());
    const auto n = shape_numel(e.shape);
    e.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (ckpt.precision_bytes == 4) {
        e.values[k] = std::bit_cast<float>(r.uint<std::uint32_t>());
      } else {
        e.values[k] = std::bit_cast<double>(r.uint<std::uint64_t>());
      }
    }
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

template <typename T>
void load_checkpoint(const Checkpoint& ckpt, ParameterSet<T>& params) {
  for (const auto& p : params.all()) {
    const auto* e = ckpt.find(p->name);
    if (!e) throw CheckpointError("checkpoint lacks parameter '" + p->name + "'");
    if (e->shape != p->value.shape()) {
      throw CheckpointError("shape mismatch for '" + p->name + "': checkpoint " + shape_string(e->shape) +
                            " vs model " + shape_string(p->value.shape()));
    }
    for (std::size_t k = 0; k < e->values.size(); ++k) p->value[k] = static_cast<T>(e->values[k]);
  }
}

template void save_checkpoint(const std::filesystem::path&, const ParameterSet<float>&,
                              const std::map<std::string, std::uint64_t>&);
template void save_checkpoint(const std::filesystem::path&, const ParameterSet<double>&,
                              const std::map<std::string, std::uint64_t>&);
template void load_checkpoint(const Checkpoint&, ParameterSet<float>&);
template void load_checkpoint(const Checkpoint&, ParameterSet<double>&);

}  // namespace fgrnn::ad
