// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/cells/cells.hpp"

namespace fgrnn::cells {

using ad::Init;
using ad::Shape;
using ad::ShapeError;

namespace {

void expect_shape(const char* what, const Shape& actual, const Shape& expected) {
  if (actual != expected) {
    throw ShapeError(std::string(what) + ": expected " + ad::shape_string(expected) + ", got " +
                     ad::shape_string(actual));
  }
}

template <typename T>
void check_step_dims(const char* op, Graph<T>& g, Var x, Var h_prev, std::size_t input_dim,
                     std::size_t hidden_dim) {
  const auto& xv = g.value(x);
  const auto& hv = g.value(h_prev);
  if (xv.cols() != input_dim || hv.cols() != hidden_dim || xv.rows() != hv.rows()) {
    throw ShapeError(std::string(op) + ": input " + ad::shape_string(xv.shape()) + " and state " +
                     ad::shape_string(hv.shape()) + " do not match cell (input " + std::to_string(input_dim) +
                     ", hidden " + std::to_string(hidden_dim) + ")");
  }
}

template <typename Params, typename T>
Params create_fused(ParameterSet<T>& params, const std::string& prefix, std::size_t input_dim,
                    std::size_t hidden_dim, std::size_t blocks, CounterRng& rng) {
  if (input_dim == 0 || hidden_dim == 0) throw ShapeError(prefix + ": cell dimensions must be positive");
  Params cell;
  cell.input_dim = input_dim;
  cell.hidden_dim = hidden_dim;
  cell.w_ih = params.create(prefix + ".w_ih", {blocks * hidden_dim, input_dim}, Init::kUniformFanIn, rng);
  cell.b_ih = params.create(prefix + ".b_ih", {blocks * hidden_dim}, Init::kZeros, rng);
  cell.w_hh = params.create(prefix + ".w_hh", {blocks * hidden_dim, hidden_dim}, Init::kUniformFanIn, rng);
  cell.b_hh = params.create(prefix + ".b_hh", {blocks * hidden_dim}, Init::kZeros, rng);
  return cell;
}

template <typename Params>
void validate_fused(const Params& cell, std::size_t blocks) {
  const std::size_t rows = blocks * cell.hidden_dim;
  expect_shape("w_ih", cell.w_ih->value.shape(), {rows, cell.input_dim});
  expect_shape("b_ih", cell.b_ih->value.shape(), {rows});
  expect_shape("w_hh", cell.w_hh->value.shape(), {rows, cell.hidden_dim});
  expect_shape("b_hh", cell.b_hh->value.shape(), {rows});
}

}  // namespace

template <typename T>
RnnCell<T> RnnCell<T>::create(ParameterSet<T>& params, const std::string& prefix, std::size_t input_dim,
                              std::size_t hidden_dim, CounterRng& rng) {
  return create_fused<RnnCell<T>>(params, prefix, input_dim, hidden_dim, 1, rng);
}

template <typename T>
void RnnCell<T>::validate() const {
  validate_fused(*this, 1);
}

template <typename T>
LstmCell<T> LstmCell<T>::create(ParameterSet<T>& params, const std::string& prefix, std::size_t input_dim,
                                std::size_t hidden_dim, CounterRng& rng) {
  return create_fused<LstmCell<T>>(params, prefix, input_dim, hidden_dim, 4, rng);
}

template <typename T>
void LstmCell<T>::validate() const {
  validate_fused(*this, 4);
}

template <typename T>
Var rnn_step(Graph<T>& g, const RnnCell<T>& cell, Var x, Var h_prev) {
  check_step_dims("rnn_step", g, x, h_prev, cell.input_dim, cell.hidden_dim);
  Var from_input = g.affine(x, g.parameter(cell.w_ih), g.parameter(cell.b_ih));
  Var from_state = g.affine(h_prev, g.parameter(cell.w_hh), g.parameter(cell.b_hh));
  return g.tanh(g.add(from_input, from_state));
}

template <typename T>
LstmGates lstm_gates(Graph<T>& g, const LstmCell<T>& cell, Var x, Var h_prev) {
  check_step_dims("lstm_step", g, x, h_prev, cell.input_dim, cell.hidden_dim);
  Var from_input = g.affine(x, g.parameter(cell.w_ih), g.parameter(cell.b_ih));
  Var from_state = g.affine(h_prev, g.parameter(cell.w_hh), g.parameter(cell.b_hh));
  Var pre = g.add(from_input, from_state);
  const std::size_t h = cell.hidden_dim;
  return LstmGates{
      g.sigmoid(g.slice_cols(pre, 0, h)),
      g.sigmoid(g.slice_cols(pre, h, h)),
      g.tanh(g.slice_cols(pre, 2 * h, h)),
      g.sigmoid(g.slice_cols(pre, 3 * h, h)),
  };
}

template <typename T>
Var lstm_cell_update(Graph<T>& g, const LstmGates& gates, Var c_prev) {
  return g.add(g.mul(gates.forget, c_prev), g.mul(gates.input, gates.cell_input));
}

template <typename T>
CellState lstm_step(Graph<T>& g, const LstmCell<T>& cell, Var x, Var h_prev, Var c_prev) {
  if (g.shape(c_prev) != g.shape(h_prev)) {
    throw ShapeError("lstm_step: cell state " + ad::shape_string(g.shape(c_prev)) + " vs hidden state " +
                     ad::shape_string(g.shape(h_prev)));
  }
  const LstmGates gates = lstm_gates(g, cell, x, h_prev);
  Var c = lstm_cell_update(g, gates, c_prev);
  Var h = g.mul(gates.output, g.tanh(c));
  return {h, c};
}

template <typename T>
CellState cell_step(Graph<T>& g, const Cell<T>& cell, Var x, const CellState& prev) {
  if (const auto* rnn = std::get_if<RnnCell<T>>(&cell)) return {rnn_step(g, *rnn, x, prev.h), Var{}};
  return lstm_step(g, std::get<LstmCell<T>>(cell), x, prev.h, prev.c);
}

template <typename T>
CellState zero_state(Graph<T>& g, const Cell<T>& cell, std::size_t batch) {
  const std::size_t h = hidden_dim_of(cell);
  CellState s;
  s.h = g.constant(ad::Tensor<T>::matrix(batch, h));
  if (kind_of(cell) == CellKind::kLstm) s.c = g.constant(ad::Tensor<T>::matrix(batch, h));
  return s;
}

template <typename T>
CellTrace unroll(Graph<T>& g, const Cell<T>& cell, std::span<const Var> inputs, const CellState& initial) {
  if (inputs.empty()) throw std::invalid_argument("unroll: empty input sequence");
  CellTrace trace;
  CellState state = initial;
  for (Var x : inputs) {
    if (const auto* lstm = std::get_if<LstmCell<T>>(&cell)) {
      const LstmGates gates = lstm_gates(g, *lstm, x, state.h);
      Var c = lstm_cell_update(g, gates, state.c);
      state = {g.mul(gates.output, g.tanh(c)), c};
      trace.gates.push_back(gates);
      trace.c.push_back(state.c);
    } else {
      state = cell_step(g, cell, x, state);
    }
    trace.h.push_back(state.h);
  }
  return trace;
}

#define FGRNN_INSTANTIATE_CELLS(T)                                                                  \
  template struct RnnCell<T>;                                                                       \
  template struct LstmCell<T>;                                                                      \
  template Var rnn_step(Graph<T>&, const RnnCell<T>&, Var, Var);                                    \
  template LstmGates lstm_gates(Graph<T>&, const LstmCell<T>&, Var, Var);                           \
  template Var lstm_cell_update<T>(Graph<T>&, const LstmGates&, Var);                               \
  template CellState lstm_step(Graph<T>&, const LstmCell<T>&, Var, Var, Var);                       \
  template CellState cell_step(Graph<T>&, const Cell<T>&, Var, const CellState&);                   \
  template CellState zero_state(Graph<T>&, const Cell<T>&, std::size_t);                           \
  template CellTrace unroll(Graph<T>&, const Cell<T>&, std::span<const Var>, const CellState&);

FGRNN_INSTANTIATE_CELLS(float)
FGRNN_INSTANTIATE_CELLS(double)

}  // namespace fgrnn::cells
