// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fgrnn/gated/gated.hpp"

namespace fgrnn::gated {

enum class Variant { kRnn, kLstm, kFgpRnn, kFgpLstm, kStackedFgpRnn, kStackedFgpLstm, kFglRnn, kFglLstm };

std::string_view variant_name(Variant v);
/// Accepts the names produced by variant_name ("rnn", "fgp_lstm", ...).
Variant parse_variant(std::string_view name);
CellKind cell_kind(Variant v);
bool is_fgp(Variant v);
bool is_stacked(Variant v);
bool is_fgl(Variant v);
bool is_vanilla(Variant v);
const std::vector<Variant>& all_variants();

/// Architecture descriptor. `components` is K (FGP variants), `layers` is L
/// (FGL, stacked FGP, and deep vanilla stacks). `inter_dim` is the projected
/// input width of stacked layers above the first (0 means input_dim).
struct ModelSpec {
  Variant variant = Variant::kLstm;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t components = 1;
  std::size_t layers = 1;
  std::size_t inter_dim = 0;
  double steepness = 4.0;

  /// Largest admissible gate value: K for FGP, L for FGL, 1 for vanilla.
  int levels() const;
  /// Width of the concatenated output the head consumes.
  std::size_t output_dim() const;
  void validate() const;
};

/// Number of scalars in the recurrent part of `spec` (cells and stack
/// projections; no embedding, no head).
std::size_t recurrent_parameter_count(const ModelSpec& spec);

/// Detached recurrent state carried between segments: one entry per bank,
/// each holding h (and c for LSTM) per component or layer.
template <typename T>
struct CarriedState {
  struct Bank {
    std::vector<Tensor<T>> h;
    std::vector<Tensor<T>> c;
  };
  std::vector<Bank> banks;
  bool empty() const { return banks.empty(); }
};

template <typename T>
struct ModelState {
  std::vector<ComponentBank> banks;
};

/// Uniform front-end over every variant. Vanilla models ignore the gate.
template <typename T>
class RecurrentModel {
 public:
  static RecurrentModel create(ParameterSet<T>& params, const std::string& prefix, const ModelSpec& spec,
                               CounterRng& rng);

  const ModelSpec& spec() const { return spec_; }
  std::size_t output_dim() const { return spec_.output_dim(); }
  int levels() const { return spec_.levels(); }

  ModelState<T> zero_state(Graph<T>& g, std::size_t batch) const;
  /// Advances one token and returns the concatenated output [B, output_dim].
  Var step(Graph<T>& g, ModelState<T>& state, Var x, const StepGate<T>& gate,
           const LayerDropout<T>& dropout = {}) const;

  CarriedState<T> detach(Graph<T>& g, const ModelState<T>& state) const;
  ModelState<T> bind(Graph<T>& g, const CarriedState<T>& carried) const;

 private:
  ModelSpec spec_;
  std::optional<FgpLayer<T>> fgp_;
  std::optional<StackedFgp<T>> stacked_;
  std::optional<FglStack<T>> fgl_;  // FGL and vanilla
};

}  // namespace fgrnn::gated
