// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fgrnn/cells/cells.hpp"

namespace fgrnn::gated {

using ad::Graph;
using ad::ParamRef;
using ad::ParameterSet;
using ad::Tensor;
using ad::Var;
using cells::Cell;
using cells::CellKind;

/// Gate signal for a whole token sequence: hard integer levels in {1..levels}
/// or soft normalized reals (unbounded).
struct GateSchedule {
  enum class Mode { kHard, kSoft };
  Mode mode = Mode::kHard;
  std::vector<int> hard;
  std::vector<double> soft;
  int levels = 1;

  static GateSchedule make_hard(std::vector<int> values, int levels);
  static GateSchedule make_soft(std::vector<double> values, int levels);
  std::size_t size() const { return mode == Mode::kHard ? hard.size() : soft.size(); }
  /// Throws if a hard value lies outside {1..levels} or `expected_length` differs.
  void validate(std::size_t expected_length) const;
};

/// Gate applied at one timestep to every row of a batch.
template <typename T>
struct StepGate {
  enum class Kind { kFull, kHard, kSoft };
  Kind kind = Kind::kFull;
  std::vector<int> levels;  // hard: one value per batch row
  Var dbar;                 // soft: [B,1]
  T steepness = T{4};

  static StepGate full() { return {}; }
  static StepGate hard(std::vector<int> per_row) { return {Kind::kHard, std::move(per_row), {}, T{4}}; }
  static StepGate soft(Var per_row, T s) { return {Kind::kSoft, {}, per_row, s}; }
};

/// K (FGP) or L (FGL) state vectors; `c` is empty for RNN cells. The model
/// output is the concatenation in index order.
struct ComponentBank {
  std::vector<Var> h;
  std::vector<Var> c;
  std::size_t size() const { return h.size(); }
};

template <typename T>
Var concat_bank(Graph<T>& g, const ComponentBank& bank);

/// alpha_k = sigmoid((k - 1 - dbar) * s) for k = 1..K.
struct GateCoefficients {
  std::vector<double> alpha;
  double steepness = 4.0;
};

GateCoefficients gate_coefficients(double dbar, int components, double steepness);

/// Graph form of one coefficient: dbar [B,1] -> alpha_k [B,1].
template <typename T>
Var gate_alpha(Graph<T>& g, Var dbar, int k, T steepness);

/// (1 - alpha) * candidate + alpha * h_prev.
template <typename T>
Var soft_gate_combine(Graph<T>& g, Var candidate, Var h_prev, Var alpha);

/// Optional dropout applied to the input of every layer above the first.
template <typename T>
struct LayerDropout {
  double rate = 0.0;
  CounterRng* rng = nullptr;
  bool training = false;
  Var apply(Graph<T>& g, Var x) const;
};

/// K parallel recurrent components of one cell family sharing the input x_t.
template <typename T>
class FgpLayer {
 public:
  static FgpLayer create(ParameterSet<T>& params, const std::string& prefix, CellKind kind, std::size_t components,
                         std::size_t input_dim, std::size_t hidden_dim, CounterRng& rng);

  CellKind kind() const { return kind_; }
  std::size_t components() const { return cells_.size(); }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  const std::vector<Cell<T>>& cells() const { return cells_; }

  ComponentBank zero_bank(Graph<T>& g, std::size_t batch) const;
  /// Component k (1-based) updates where k <= d_t; others carry their state.
  /// For LSTM only the cell state is gated; h is recomputed from the gated c.
  ComponentBank step(Graph<T>& g, const ComponentBank& prev, Var x, const StepGate<T>& gate) const;

 private:
  CellKind kind_ = CellKind::kRnn;
  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  std::vector<Cell<T>> cells_;
};

template <typename T>
ComponentBank fgp_rnn_step(Graph<T>& g, const FgpLayer<T>& layer, const ComponentBank& prev, Var x,
                           const StepGate<T>& gate);
template <typename T>
ComponentBank fgp_lstm_step(Graph<T>& g, const FgpLayer<T>& layer, const ComponentBank& prev, Var x,
                            const StepGate<T>& gate);

/// Dimensionality reduction between stacked FGP layers:
/// x^(l) = W_oh concat(bank^(l-1)) + b_oh.
template <typename T>
struct StackProjection {
  ParamRef<T> w_oh, b_oh;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
};

template <typename T>
class StackedFgp {
 public:
  /// `inter_dim` is the projected input width of layers 2..L.
  static StackedFgp create(ParameterSet<T>& params, const std::string& prefix, CellKind kind, std::size_t layers,
                           std::size_t components, std::size_t input_dim, std::size_t hidden_dim,
                           std::size_t inter_dim, CounterRng& rng);
  static StackedFgp from_parts(std::vector<FgpLayer<T>> layers, std::vector<StackProjection<T>> projections);

  std::size_t layers() const { return layers_.size(); }
  const std::vector<FgpLayer<T>>& fgp_layers() const { return layers_; }
  const std::vector<StackProjection<T>>& projections() const { return projections_; }

  std::vector<ComponentBank> zero_state(Graph<T>& g, std::size_t batch) const;
  /// Advances every layer by one token; the same gate drives all layers.
  std::vector<ComponentBank> step(Graph<T>& g, const std::vector<ComponentBank>& prev, Var x,
                                  const StepGate<T>& gate, const LayerDropout<T>& dropout = {}) const;

 private:
  std::vector<FgpLayer<T>> layers_;
  std::vector<StackProjection<T>> projections_;
};

/// Per-timestep, per-layer banks produced by stacked_fgp_forward.
using StackTrace = std::vector<std::vector<ComponentBank>>;

template <typename T>
StackTrace stacked_fgp_forward(Graph<T>& g, const StackedFgp<T>& stack, std::span<const Var> inputs,
                               std::span<const StepGate<T>> schedule, std::vector<ComponentBank> initial = {});

/// L stacked cells where layer l updates only when l <= d_t. The bank holds
/// one state per layer.
template <typename T>
class FglStack {
 public:
  static FglStack create(ParameterSet<T>& params, const std::string& prefix, CellKind kind, std::size_t layers,
                         std::size_t input_dim, std::size_t hidden_dim, CounterRng& rng);

  CellKind kind() const { return kind_; }
  std::size_t layers() const { return cells_.size(); }
  std::size_t hidden_dim() const { return hidden_dim_; }
  const std::vector<Cell<T>>& cells() const { return cells_; }

  ComponentBank zero_bank(Graph<T>& g, std::size_t batch) const;
  /// Inactive layers carry h (and, for LSTM, c) unchanged.
  ComponentBank step(Graph<T>& g, const ComponentBank& prev, Var x, const StepGate<T>& gate,
                     const LayerDropout<T>& dropout = {}) const;

 private:
  CellKind kind_ = CellKind::kRnn;
  std::size_t hidden_dim_ = 0;
  std::vector<Cell<T>> cells_;
};

template <typename T>
ComponentBank fgl_rnn_step(Graph<T>& g, const FglStack<T>& stack, const ComponentBank& prev, Var x,
                           const StepGate<T>& gate);
template <typename T>
ComponentBank fgl_lstm_step(Graph<T>& g, const FglStack<T>& stack, const ComponentBank& prev, Var x,
                            const StepGate<T>& gate);

/// Row flags for component/layer `index` (1-based) under a hard gate.
std::vector<std::uint8_t> active_rows(std::span<const int> levels, int index);

}  // namespace fgrnn::gated
