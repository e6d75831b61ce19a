// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/gated/model.hpp"

#include <array>
#include <stdexcept>

namespace fgrnn::gated {

namespace {

struct VariantInfo {
  Variant variant;
  std::string_view name;
};

constexpr std::array<VariantInfo, 8> kVariants = {{
    {Variant::kRnn, "rnn"},
    {Variant::kLstm, "lstm"},
    {Variant::kFgpRnn, "fgp_rnn"},
    {Variant::kFgpLstm, "fgp_lstm"},
    {Variant::kStackedFgpRnn, "stacked_fgp_rnn"},
    {Variant::kStackedFgpLstm, "stacked_fgp_lstm"},
    {Variant::kFglRnn, "fgl_rnn"},
    {Variant::kFglLstm, "fgl_lstm"},
}};

std::size_t cell_count(CellKind kind, std::size_t in, std::size_t h) {
  const std::size_t blocks = kind == CellKind::kLstm ? 4 : 1;
  return blocks * h * (in + h + 2);
}

}  // namespace

std::string_view variant_name(Variant v) {
  for (const auto& info : kVariants) {
    if (info.variant == v) return info.name;
  }
  throw std::invalid_argument("unknown variant");
}

Variant parse_variant(std::string_view name) {
  for (const auto& info : kVariants) {
    if (info.name == name) return info.variant;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> all = [] {
    std::vector<Variant> out;
    for (const auto& info : kVariants) out.push_back(info.variant);
    return out;
  }();
  return all;
}

CellKind cell_kind(Variant v) {
  switch (v) {
    case Variant::kRnn:
    case Variant::kFgpRnn:
    case Variant::kStackedFgpRnn:
    case Variant::kFglRnn:
      return CellKind::kRnn;
    default:
      return CellKind::kLstm;
  }
}

bool is_fgp(Variant v) { return v == Variant::kFgpRnn || v == Variant::kFgpLstm || is_stacked(v); }
bool is_stacked(Variant v) { return v == Variant::kStackedFgpRnn || v == Variant::kStackedFgpLstm; }
bool is_fgl(Variant v) { return v == Variant::kFglRnn || v == Variant::kFglLstm; }
bool is_vanilla(Variant v) { return v == Variant::kRnn || v == Variant::kLstm; }

int ModelSpec::levels() const {
  if (is_fgp(variant)) return static_cast<int>(components);
  if (is_fgl(variant)) return static_cast<int>(layers);
  return 1;
}

std::size_t ModelSpec::output_dim() const {
  if (is_fgp(variant)) return components * hidden_dim;
  if (is_fgl(variant)) return layers * hidden_dim;
  return hidden_dim;
}

void ModelSpec::validate() const {
  if (input_dim == 0 || hidden_dim == 0) throw std::invalid_argument("model dimensions must be positive");
  if (components == 0 || layers == 0) throw std::invalid_argument("component and layer counts must be positive");
  if (!(steepness > 1.0)) throw std::invalid_argument("gate steepness must exceed 1");
  if (!is_fgp(variant) && components != 1) {
    throw std::invalid_argument(std::string(variant_name(variant)) + " takes no components (k_components must be 1)");
  }
  if (variant == Variant::kFgpRnn || variant == Variant::kFgpLstm) {
    if (layers != 1) throw std::invalid_argument("fgp variants have one layer; use stacked_fgp_* for depth");
  }
}

std::size_t recurrent_parameter_count(const ModelSpec& spec) {
  spec.validate();
  const CellKind kind = cell_kind(spec.variant);
  const std::size_t h = spec.hidden_dim;
  const std::size_t in = spec.input_dim;
  if (is_stacked(spec.variant)) {
    const std::size_t inter = spec.inter_dim == 0 ? in : spec.inter_dim;
    const std::size_t K = spec.components;
    std::size_t n = K * cell_count(kind, in, h);
    n += (spec.layers - 1) * ((K * h) * inter + inter + K * cell_count(kind, inter, h));
    return n;
  }
  if (is_fgp(spec.variant)) return spec.components * cell_count(kind, in, h);
  return cell_count(kind, in, h) + (spec.layers - 1) * cell_count(kind, h, h);
}

template <typename T>
RecurrentModel<T> RecurrentModel<T>::create(ParameterSet<T>& params, const std::string& prefix, const ModelSpec& spec,
                                            CounterRng& rng) {
  spec.validate();
  RecurrentModel m;
  m.spec_ = spec;
  const CellKind kind = cell_kind(spec.variant);
  if (is_stacked(spec.variant)) {
    const std::size_t inter = spec.inter_dim == 0 ? spec.input_dim : spec.inter_dim;
    m.stacked_ = StackedFgp<T>::create(params, prefix, kind, spec.layers, spec.components, spec.input_dim,
                                       spec.hidden_dim, inter, rng);
  } else if (is_fgp(spec.variant)) {
    m.fgp_ = FgpLayer<T>::create(params, prefix, kind, spec.components, spec.input_dim, spec.hidden_dim, rng);
  } else {
    m.fgl_ = FglStack<T>::create(params, prefix, kind, spec.layers, spec.input_dim, spec.hidden_dim, rng);
  }
  return m;
}

template <typename T>
ModelState<T> RecurrentModel<T>::zero_state(Graph<T>& g, std::size_t batch) const {
  ModelState<T> s;
  if (stacked_) {
    s.banks = stacked_->zero_state(g, batch);
  } else if (fgp_) {
    s.banks.push_back(fgp_->zero_bank(g, batch));
  } else {
    s.banks.push_back(fgl_->zero_bank(g, batch));
  }
  return s;
}

template <typename T>
Var RecurrentModel<T>::step(Graph<T>& g, ModelState<T>& state, Var x, const StepGate<T>& gate,
                            const LayerDropout<T>& dropout) const {
  if (stacked_) {
    state.banks = stacked_->step(g, state.banks, x, gate, dropout);
    return concat_bank(g, state.banks.back());
  }
  if (state.banks.size() != 1) throw ad::ShapeError("model state must hold one bank");
  if (fgp_) {
    state.banks[0] = fgp_->step(g, state.banks[0], x, gate);
    return concat_bank(g, state.banks[0]);
  }
  if (is_vanilla(spec_.variant)) {
    state.banks[0] = fgl_->step(g, state.banks[0], x, StepGate<T>::full(), dropout);
    return state.banks[0].h.back();
  }
  state.banks[0] = fgl_->step(g, state.banks[0], x, gate, dropout);
  return concat_bank(g, state.banks[0]);
}

template <typename T>
CarriedState<T> RecurrentModel<T>::detach(Graph<T>& g, const ModelState<T>& state) const {
  CarriedState<T> out;
  for (const auto& bank : state.banks) {
    typename CarriedState<T>::Bank b;
    for (Var v : bank.h) b.h.push_back(g.value(v));
    for (Var v : bank.c) b.c.push_back(g.value(v));
    out.banks.push_back(std::move(b));
  }
  return out;
}

template <typename T>
ModelState<T> RecurrentModel<T>::bind(Graph<T>& g, const CarriedState<T>& carried) const {
  ModelState<T> s;
  for (const auto& bank : carried.banks) {
    ComponentBank b;
    for (const auto& t : bank.h) b.h.push_back(g.constant(t));
    for (const auto& t : bank.c) b.c.push_back(g.constant(t));
    s.banks.push_back(std::move(b));
  }
  return s;
}

template class RecurrentModel<float>;
template class RecurrentModel<double>;

}  // namespace fgrnn::gated
