// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/gated/gated.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fgrnn/autodiff/optim.hpp"

namespace fgrnn::gated {

using ad::Init;
using ad::ShapeError;
using cells::CellState;
using cells::LstmCell;
using cells::RnnCell;

// ---------------------------------------------------------------------------
// Schedules and coefficients

GateSchedule GateSchedule::make_hard(std::vector<int> values, int levels) {
  GateSchedule s;
  s.mode = Mode::kHard;
  s.hard = std::move(values);
  s.levels = levels;
  s.validate(s.hard.size());
  return s;
}

GateSchedule GateSchedule::make_soft(std::vector<double> values, int levels) {
  GateSchedule s;
  s.mode = Mode::kSoft;
  s.soft = std::move(values);
  s.levels = levels;
  s.validate(s.soft.size());
  return s;
}

void GateSchedule::validate(std::size_t expected_length) const {
  if (levels < 1) throw std::invalid_argument("gate schedule needs at least one level");
  if (size() != expected_length) {
    throw std::invalid_argument("gate schedule has " + std::to_string(size()) + " values for " +
                                std::to_string(expected_length) + " tokens");
  }
  if (mode == Mode::kHard) {
    for (int d : hard) {
      if (d < 1 || d > levels) {
        throw std::out_of_range("gate value " + std::to_string(d) + " outside {1.." + std::to_string(levels) + "}");
      }
    }
  }
}

GateCoefficients gate_coefficients(double dbar, int components, double steepness) {
  if (components < 1) throw std::invalid_argument("gate_coefficients: need at least one component");
  if (!(steepness > 1.0)) throw std::invalid_argument("gate_coefficients: steepness must exceed 1");
  GateCoefficients out;
  out.steepness = steepness;
  for (int k = 1; k <= components; ++k) {
    const double z = (k - 1 - dbar) * steepness;
    out.alpha.push_back(1.0 / (1.0 + std::exp(-z)));
  }
  return out;
}

template <typename T>
Var gate_alpha(Graph<T>& g, Var dbar, int k, T steepness) {
  return g.sigmoid(g.affine_scalar(dbar, -steepness, static_cast<T>(k - 1) * steepness));
}

template <typename T>
Var soft_gate_combine(Graph<T>& g, Var candidate, Var h_prev, Var alpha) {
  return g.lerp_rows(candidate, h_prev, alpha);
}

template <typename T>
Var concat_bank(Graph<T>& g, const ComponentBank& bank) {
  if (bank.h.size() == 1) return bank.h.front();
  return g.concat_cols(std::span<const Var>(bank.h));
}

template <typename T>
Var LayerDropout<T>::apply(Graph<T>& g, Var x) const {
  if (!training || rate <= 0.0 || rng == nullptr) return x;
  return g.dropout(x, ad::sample_dropout_mask<T>(g.shape(x), rate, *rng, true));
}

std::vector<std::uint8_t> active_rows(std::span<const int> levels, int index) {
  std::vector<std::uint8_t> flags(levels.size());
  for (std::size_t r = 0; r < levels.size(); ++r) flags[r] = index <= levels[r] ? 1 : 0;
  return flags;
}

namespace {

enum class Activity { kNone, kSome, kAll, kSoft };

struct Decision {
  Activity activity = Activity::kAll;
  std::vector<std::uint8_t> flags;
  Var alpha;
};

template <typename T>
void check_gate(Graph<T>& g, const StepGate<T>& gate, int levels, std::size_t batch) {
  if (gate.kind == StepGate<T>::Kind::kHard) {
    if (gate.levels.size() != batch) {
      throw ShapeError("gate has " + std::to_string(gate.levels.size()) + " values for batch of " +
                       std::to_string(batch));
    }
    for (int d : gate.levels) {
      if (d < 1 || d > levels) {
        throw std::out_of_range("gate value d_t=" + std::to_string(d) + " outside {1.." + std::to_string(levels) +
                                "}");
      }
    }
  } else if (gate.kind == StepGate<T>::Kind::kSoft) {
    if (!gate.dbar.valid() || g.value(gate.dbar).size() != batch) {
      throw ShapeError("soft gate must hold one value per batch row");
    }
  }
}

template <typename T>
Decision decide(Graph<T>& g, const StepGate<T>& gate, int index) {
  Decision d;
  switch (gate.kind) {
    case StepGate<T>::Kind::kFull:
      d.activity = Activity::kAll;
      break;
    case StepGate<T>::Kind::kSoft:
      d.activity = Activity::kSoft;
      d.alpha = gate_alpha(g, gate.dbar, index, gate.steepness);
      break;
    case StepGate<T>::Kind::kHard: {
      d.flags = active_rows(gate.levels, index);
      const auto on = std::count(d.flags.begin(), d.flags.end(), std::uint8_t{1});
      if (on == 0) {
        d.activity = Activity::kNone;
      } else if (static_cast<std::size_t>(on) == d.flags.size()) {
        d.activity = Activity::kAll;
      } else {
        d.activity = Activity::kSome;
      }
      break;
    }
  }
  return d;
}

template <typename T>
Var combine(Graph<T>& g, const Decision& d, Var candidate, Var prev) {
  switch (d.activity) {
    case Activity::kAll:
      return candidate;
    case Activity::kNone:
      return prev;
    case Activity::kSome:
      return g.row_select(d.flags, candidate, prev);
    case Activity::kSoft:
      return soft_gate_combine(g, candidate, prev, d.alpha);
  }
  return candidate;
}

template <typename T>
std::size_t batch_of(Graph<T>& g, Var x) {
  return g.value(x).rows();
}

}  // namespace

// ---------------------------------------------------------------------------
// FGP

template <typename T>
FgpLayer<T> FgpLayer<T>::create(ParameterSet<T>& params, const std::string& prefix, CellKind kind,
                                std::size_t components, std::size_t input_dim, std::size_t hidden_dim,
                                CounterRng& rng) {
  if (components == 0) throw std::invalid_argument("FGP layer needs at least one component");
  FgpLayer layer;
  layer.kind_ = kind;
  layer.input_dim_ = input_dim;
  layer.hidden_dim_ = hidden_dim;
  for (std::size_t k = 0; k < components; ++k) {
    layer.cells_.push_back(
        cells::make_cell(kind, params, prefix + ".k" + std::to_string(k + 1), input_dim, hidden_dim, rng));
  }
  return layer;
}

template <typename T>
ComponentBank FgpLayer<T>::zero_bank(Graph<T>& g, std::size_t batch) const {
  ComponentBank bank;
  for (const auto& cell : cells_) {
    const CellState s = cells::zero_state(g, cell, batch);
    bank.h.push_back(s.h);
    if (s.c.valid()) bank.c.push_back(s.c);
  }
  return bank;
}

template <typename T>
ComponentBank FgpLayer<T>::step(Graph<T>& g, const ComponentBank& prev, Var x, const StepGate<T>& gate) const {
  const std::size_t K = cells_.size();
  if (prev.h.size() != K || (kind_ == CellKind::kLstm && prev.c.size() != K)) {
    throw ShapeError("FGP step: bank holds " + std::to_string(prev.h.size()) + " states for " + std::to_string(K) +
                     " components");
  }
  check_gate(g, gate, static_cast<int>(K), batch_of(g, x));
  ComponentBank next;
  for (std::size_t k = 0; k < K; ++k) {
    const Decision d = decide(g, gate, static_cast<int>(k + 1));
    if (kind_ == CellKind::kRnn) {
      if (d.activity == Activity::kNone) {
        next.h.push_back(prev.h[k]);
        continue;
      }
      Var candidate = cells::rnn_step(g, std::get<RnnCell<T>>(cells_[k]), x, prev.h[k]);
      next.h.push_back(combine(g, d, candidate, prev.h[k]));
    } else {
      const auto gates = cells::lstm_gates(g, std::get<LstmCell<T>>(cells_[k]), x, prev.h[k]);
      Var c = prev.c[k];
      if (d.activity != Activity::kNone) c = combine(g, d, cells::lstm_cell_update(g, gates, prev.c[k]), prev.c[k]);
      next.c.push_back(c);
      next.h.push_back(g.mul(gates.output, g.tanh(c)));
    }
  }
  return next;
}

template <typename T>
ComponentBank fgp_rnn_step(Graph<T>& g, const FgpLayer<T>& layer, const ComponentBank& prev, Var x,
                           const StepGate<T>& gate) {
  if (layer.kind() != CellKind::kRnn) throw std::invalid_argument("fgp_rnn_step on an LSTM layer");
  return layer.step(g, prev, x, gate);
}

template <typename T>
ComponentBank fgp_lstm_step(Graph<T>& g, const FgpLayer<T>& layer, const ComponentBank& prev, Var x,
                            const StepGate<T>& gate) {
  if (layer.kind() != CellKind::kLstm) throw std::invalid_argument("fgp_lstm_step on an RNN layer");
  return layer.step(g, prev, x, gate);
}

// ---------------------------------------------------------------------------
// Stacked FGP

template <typename T>
StackedFgp<T> StackedFgp<T>::create(ParameterSet<T>& params, const std::string& prefix, CellKind kind,
                                    std::size_t layers, std::size_t components, std::size_t input_dim,
                                    std::size_t hidden_dim, std::size_t inter_dim, CounterRng& rng) {
  if (layers == 0) throw std::invalid_argument("stacked FGP needs at least one layer");
  std::vector<FgpLayer<T>> fgp;
  std::vector<StackProjection<T>> proj;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string name = prefix + ".l" + std::to_string(l + 1);
    if (l > 0) {
      StackProjection<T> p;
      p.input_dim = components * hidden_dim;
      p.output_dim = inter_dim;
      p.w_oh = params.create(name + ".w_oh", {inter_dim, p.input_dim}, Init::kUniformFanIn, rng);
      p.b_oh = params.create(name + ".b_oh", {inter_dim}, Init::kZeros, rng);
      proj.push_back(p);
    }
    fgp.push_back(FgpLayer<T>::create(params, name, kind, components, l == 0 ? input_dim : inter_dim, hidden_dim, rng));
  }
  return from_parts(std::move(fgp), std::move(proj));
}

template <typename T>
StackedFgp<T> StackedFgp<T>::from_parts(std::vector<FgpLayer<T>> layers, std::vector<StackProjection<T>> projections) {
  if (layers.empty()) throw std::invalid_argument("stacked FGP needs at least one layer");
  if (projections.size() + 1 != layers.size()) {
    throw std::invalid_argument("stacked FGP needs one projection between each pair of layers");
  }
  for (std::size_t l = 1; l < layers.size(); ++l) {
    const auto& below = layers[l - 1];
    const auto& p = projections[l - 1];
    if (below.components() != layers[l].components()) {
      throw std::invalid_argument("stacked FGP layers must share the component count");
    }
    if (p.w_oh->value.cols() != below.components() * below.hidden_dim() ||
        p.w_oh->value.rows() != layers[l].input_dim() || p.b_oh->value.size() != layers[l].input_dim()) {
      throw ShapeError("stack projection " + ad::shape_string(p.w_oh->value.shape()) + " cannot map a bank of " +
                       std::to_string(below.components() * below.hidden_dim()) + " into layer input " +
                       std::to_string(layers[l].input_dim()));
    }
  }
  StackedFgp s;
  s.layers_ = std::move(layers);
  s.projections_ = std::move(projections);
  return s;
}

template <typename T>
std::vector<ComponentBank> StackedFgp<T>::zero_state(Graph<T>& g, std::size_t batch) const {
  std::vector<ComponentBank> out;
  for (const auto& layer : layers_) out.push_back(layer.zero_bank(g, batch));
  return out;
}

template <typename T>
std::vector<ComponentBank> StackedFgp<T>::step(Graph<T>& g, const std::vector<ComponentBank>& prev, Var x,
                                               const StepGate<T>& gate, const LayerDropout<T>& dropout) const {
  if (prev.size() != layers_.size()) throw ShapeError("stacked FGP: state has wrong layer count");
  std::vector<ComponentBank> next;
  Var input = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (l > 0) {
      const auto& p = projections_[l - 1];
      Var below = dropout.apply(g, concat_bank(g, next.back()));
      input = g.affine(below, g.parameter(p.w_oh), g.parameter(p.b_oh));
    }
    next.push_back(layers_[l].step(g, prev[l], input, gate));
  }
  return next;
}

template <typename T>
StackTrace stacked_fgp_forward(Graph<T>& g, const StackedFgp<T>& stack, std::span<const Var> inputs,
                               std::span<const StepGate<T>> schedule, std::vector<ComponentBank> initial) {
  if (inputs.empty()) throw std::invalid_argument("stacked_fgp_forward: empty input sequence");
  if (schedule.size() != inputs.size()) throw std::invalid_argument("stacked_fgp_forward: schedule length mismatch");
  std::vector<ComponentBank> state =
      initial.empty() ? stack.zero_state(g, g.value(inputs.front()).rows()) : std::move(initial);
  StackTrace trace;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    state = stack.step(g, state, inputs[t], schedule[t]);
    trace.push_back(state);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// FGL

template <typename T>
FglStack<T> FglStack<T>::create(ParameterSet<T>& params, const std::string& prefix, CellKind kind,
                                std::size_t layers, std::size_t input_dim, std::size_t hidden_dim, CounterRng& rng) {
  if (layers == 0) throw std::invalid_argument("FGL needs at least one layer");
  FglStack s;
  s.kind_ = kind;
  s.hidden_dim_ = hidden_dim;
  for (std::size_t l = 0; l < layers; ++l) {
    s.cells_.push_back(cells::make_cell(kind, params, prefix + ".l" + std::to_string(l + 1),
                                        l == 0 ? input_dim : hidden_dim, hidden_dim, rng));
  }
  return s;
}

template <typename T>
ComponentBank FglStack<T>::zero_bank(Graph<T>& g, std::size_t batch) const {
  ComponentBank bank;
  for (const auto& cell : cells_) {
    const CellState s = cells::zero_state(g, cell, batch);
    bank.h.push_back(s.h);
    if (s.c.valid()) bank.c.push_back(s.c);
  }
  return bank;
}

template <typename T>
ComponentBank FglStack<T>::step(Graph<T>& g, const ComponentBank& prev, Var x, const StepGate<T>& gate,
                                const LayerDropout<T>& dropout) const {
  const std::size_t L = cells_.size();
  if (prev.h.size() != L || (kind_ == CellKind::kLstm && prev.c.size() != L)) {
    throw ShapeError("FGL step: bank holds " + std::to_string(prev.h.size()) + " states for " + std::to_string(L) +
                     " layers");
  }
  check_gate(g, gate, static_cast<int>(L), batch_of(g, x));
  ComponentBank next;
  for (std::size_t l = 0; l < L; ++l) {
    const Decision d = decide(g, gate, static_cast<int>(l + 1));
    if (d.activity == Activity::kNone) {
      next.h.push_back(prev.h[l]);
      if (kind_ == CellKind::kLstm) next.c.push_back(prev.c[l]);
      continue;
    }
    Var input = l == 0 ? x : dropout.apply(g, next.h[l - 1]);
    const CellState before{prev.h[l], kind_ == CellKind::kLstm ? prev.c[l] : Var{}};
    const CellState candidate = cells::cell_step(g, cells_[l], input, before);
    next.h.push_back(combine(g, d, candidate.h, prev.h[l]));
    if (kind_ == CellKind::kLstm) next.c.push_back(combine(g, d, candidate.c, prev.c[l]));
  }
  return next;
}

template <typename T>
ComponentBank fgl_rnn_step(Graph<T>& g, const FglStack<T>& stack, const ComponentBank& prev, Var x,
                           const StepGate<T>& gate) {
  if (stack.kind() != CellKind::kRnn) throw std::invalid_argument("fgl_rnn_step on an LSTM stack");
  return stack.step(g, prev, x, gate);
}

template <typename T>
ComponentBank fgl_lstm_step(Graph<T>& g, const FglStack<T>& stack, const ComponentBank& prev, Var x,
                            const StepGate<T>& gate) {
  if (stack.kind() != CellKind::kLstm) throw std::invalid_argument("fgl_lstm_step on an RNN stack");
  return stack.step(g, prev, x, gate);
}

#define FGRNN_INSTANTIATE_GATED(T)                                                                              \
  template Var gate_alpha(Graph<T>&, Var, int, T);                                                              \
  template Var soft_gate_combine(Graph<T>&, Var, Var, Var);                                                     \
  template Var concat_bank(Graph<T>&, const ComponentBank&);                                                    \
  template struct LayerDropout<T>;                                                                              \
  template class FgpLayer<T>;                                                                                   \
  template class StackedFgp<T>;                                                                                 \
  template class FglStack<T>;                                                                                   \
  template ComponentBank fgp_rnn_step(Graph<T>&, const FgpLayer<T>&, const ComponentBank&, Var,                 \
                                      const StepGate<T>&);                                                      \
  template ComponentBank fgp_lstm_step(Graph<T>&, const FgpLayer<T>&, const ComponentBank&, Var,                \
                                       const StepGate<T>&);                                                     \
  template StackTrace stacked_fgp_forward(Graph<T>&, const StackedFgp<T>&, std::span<const Var>,                \
                                          std::span<const StepGate<T>>, std::vector<ComponentBank>);            \
  template ComponentBank fgl_rnn_step(Graph<T>&, const FglStack<T>&, const ComponentBank&, Var,                 \
                                      const StepGate<T>&);                                                      \
  template ComponentBank fgl_lstm_step(Graph<T>&, const FglStack<T>&, const ComponentBank&, Var,                \
                                       const StepGate<T>&);

FGRNN_INSTANTIATE_GATED(float)
FGRNN_INSTANTIATE_GATED(double)

}  // namespace fgrnn::gated
