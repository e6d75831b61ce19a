// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fgrnn/autodiff/graph.hpp"
#include "fgrnn/autodiff/parameter.hpp"

namespace fgrnn::cells {

using ad::Graph;
using ad::ParamRef;
using ad::ParameterSet;
using ad::Var;

/// Vanilla RNN cell: h_t = tanh(W_ih x_t + b_ih + W_hh h_{t-1} + b_hh).
/// Weights are stored [out, in].
template <typename T>
struct RnnCell {
  ParamRef<T> w_ih, b_ih, w_hh, b_hh;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  static RnnCell create(ParameterSet<T>& params, const std::string& prefix, std::size_t input_dim,
                        std::size_t hidden_dim, CounterRng& rng);
  /// Checks the stored tensors against input_dim/hidden_dim.
  void validate() const;
};

/// LSTM cell with the four gate blocks fused along the output axis in the
/// order input, forget, cell input, output: w_ih is [4h, in], w_hh [4h, h].
template <typename T>
struct LstmCell {
  ParamRef<T> w_ih, b_ih, w_hh, b_hh;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  static LstmCell create(ParameterSet<T>& params, const std::string& prefix, std::size_t input_dim,
                         std::size_t hidden_dim, CounterRng& rng);
  void validate() const;
};

template <typename T>
using Cell = std::variant<RnnCell<T>, LstmCell<T>>;

enum class CellKind { kRnn, kLstm };

template <typename T>
CellKind kind_of(const Cell<T>& cell) {
  return std::holds_alternative<RnnCell<T>>(cell) ? CellKind::kRnn : CellKind::kLstm;
}

template <typename T>
std::size_t hidden_dim_of(const Cell<T>& cell) {
  return std::visit([](const auto& c) { return c.hidden_dim; }, cell);
}

template <typename T>
Cell<T> make_cell(CellKind kind, ParameterSet<T>& params, const std::string& prefix, std::size_t input_dim,
                  std::size_t hidden_dim, CounterRng& rng) {
  if (kind == CellKind::kRnn) return RnnCell<T>::create(params, prefix, input_dim, hidden_dim, rng);
  return LstmCell<T>::create(params, prefix, input_dim, hidden_dim, rng);
}

/// Named views over the fused LSTM pre-activation, after their
/// nonlinearities.
struct LstmGates {
  Var input;
  Var forget;
  Var cell_input;
  Var output;
};

/// Recurrent state of one cell; `c` is unset for RNN cells.
struct CellState {
  Var h;
  Var c;
};

template <typename T>
Var rnn_step(Graph<T>& g, const RnnCell<T>& cell, Var x, Var h_prev);

template <typename T>
LstmGates lstm_gates(Graph<T>& g, const LstmCell<T>& cell, Var x, Var h_prev);

/// f * c_prev + i * c~.
template <typename T>
Var lstm_cell_update(Graph<T>& g, const LstmGates& gates, Var c_prev);

template <typename T>
CellState lstm_step(Graph<T>& g, const LstmCell<T>& cell, Var x, Var h_prev, Var c_prev);

template <typename T>
CellState cell_step(Graph<T>& g, const Cell<T>& cell, Var x, const CellState& prev);

/// Zero h (and c) for `batch` rows.
template <typename T>
CellState zero_state(Graph<T>& g, const Cell<T>& cell, std::size_t batch);

/// Per-timestep states of an unrolled cell. `gates` is filled for LSTM only.
struct CellTrace {
  std::vector<Var> h;
  std::vector<Var> c;
  std::vector<LstmGates> gates;
  std::size_t size() const { return h.size(); }
  CellState final_state() const { return {h.back(), c.empty() ? Var{} : c.back()}; }
};

template <typename T>
CellTrace unroll(Graph<T>& g, const Cell<T>& cell, std::span<const Var> inputs, const CellState& initial);

}  // namespace fgrnn::cells
