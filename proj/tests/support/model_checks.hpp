// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fgrnn/gated/model.hpp"
#include "support/gradcheck.hpp"

namespace fgrnn::check {

using gated::ModelSpec;
using gated::Variant;

/// Small spec of every variant: input 3, hidden 2, K (or L) = 3, stacked
/// variants with 2 layers and inter dim 3.
inline ModelSpec small_variant_spec(Variant v, std::size_t levels = 3) {
  ModelSpec s{v, 3, 2, 1, 1, 0, 4.0};
  if (gated::is_fgp(v)) s.components = levels;
  if (gated::is_stacked(v)) s.layers = 2, s.inter_dim = 3;
  if (gated::is_fgl(v)) s.layers = levels;
  return s;
}

inline std::vector<Tensor<double>> random_sequence(CounterRng& rng, std::size_t steps, std::size_t batch,
                                                   std::size_t dim) {
  std::vector<Tensor<double>> xs;
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor<double> x = Tensor<double>::matrix(batch, dim);
    for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
    xs.push_back(std::move(x));
  }
  return xs;
}

enum class GateMode { kFull, kHard, kSoft };

/// Central-difference check of a 5-step unroll (batch 2) through the
/// uniform model front-end. Soft mode also checks the gate inputs.
inline GradCheckResult model_gradcheck(const ModelSpec& spec, GateMode mode, std::uint64_t seed,
                                       std::size_t steps = 5) {
  ParameterSet<double> ps;
  CounterRng rng(seed, "model_gradcheck");
  const auto model = gated::RecurrentModel<double>::create(ps, "m", spec, rng);
  for (const auto& p : ps.all()) {
    for (auto& v : p->value.values()) v += rng.uniform(-0.3, 0.3);
  }
  const std::size_t batch = 2;
  const auto xs = random_sequence(rng, steps, batch, spec.input_dim);
  std::vector<std::vector<int>> hard(steps);
  for (auto& row : hard) {
    for (std::size_t b = 0; b < batch; ++b) row.push_back(static_cast<int>(rng.uniform_int(1, spec.levels())));
  }
  ad::ParamRef<double> dbar;
  if (mode == GateMode::kSoft) {
    dbar = random_param(ps, "dbar", {steps * batch, 1}, rng, -0.5, static_cast<double>(spec.levels()) + 0.5);
  }
  auto build = [&](Graph<double>& g) {
    auto state = model.zero_state(g, batch);
    std::vector<Var> outs;
    for (std::size_t t = 0; t < steps; ++t) {
      gated::StepGate<double> gate = gated::StepGate<double>::full();
      if (mode == GateMode::kHard) gate = gated::StepGate<double>::hard(hard[t]);
      if (mode == GateMode::kSoft) {
        gate = gated::StepGate<double>::soft(g.slice_rows(g.parameter(dbar), t * batch, batch), spec.steepness);
      }
      outs.push_back(model.step(g, state, g.constant(xs[t]), gate));
    }
    return g.concat_rows(std::span<const Var>(outs));
  };
  return grad_check(ps, build, seed);
}

/// Copies every parameter value of `from` into `to` in creation order.
inline void copy_values(const ParameterSet<double>& from, ParameterSet<double>& to) {
  if (from.size() != to.size()) throw std::logic_error("parameter sets differ in size");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from.all()[i]->value.shape() != to.all()[i]->value.shape()) throw std::logic_error("shape mismatch");
    to.all()[i]->value = from.all()[i]->value;
  }
}

/// FGP(K=1) or FGL(L=1) with d_t = 1 against the vanilla model with the
/// same weights over `steps` steps. Returns the number of differing
/// scalars (bitwise comparison).
inline std::size_t degeneration_mismatches(cells::CellKind kind, bool fgl, std::uint64_t seed, std::size_t steps = 20) {
  const bool lstm = kind == cells::CellKind::kLstm;
  const Variant vanilla_v = lstm ? Variant::kLstm : Variant::kRnn;
  const Variant gated_v = fgl ? (lstm ? Variant::kFglLstm : Variant::kFglRnn) : (lstm ? Variant::kFgpLstm : Variant::kFgpRnn);
  CounterRng rng(seed, "degeneration");
  ParameterSet<double> pv, pg;
  const ModelSpec sv{vanilla_v, 3, 4, 1, 1, 0, 4.0};
  const ModelSpec sg{gated_v, 3, 4, 1, 1, 0, 4.0};
  const auto vanilla = gated::RecurrentModel<double>::create(pv, "v", sv, rng);
  const auto fgx = gated::RecurrentModel<double>::create(pg, "g", sg, rng);
  for (const auto& p : pv.all()) {
    for (auto& v : p->value.values()) v = rng.uniform(-1.0, 1.0);
  }
  copy_values(pv, pg);
  const auto xs = random_sequence(rng, steps, 2, 3);
  Graph<double> g;
  auto a = vanilla.zero_state(g, 2);
  auto b = fgx.zero_state(g, 2);
  std::size_t bad = 0;
  for (const auto& x : xs) {
    const auto& ya = g.value(vanilla.step(g, a, g.constant(x), gated::StepGate<double>::full()));
    const auto& yb = g.value(fgx.step(g, b, g.constant(x), gated::StepGate<double>::hard({1, 1})));
    for (std::size_t i = 0; i < ya.size(); ++i) bad += ya[i] != yb[i];
    if (lstm) {
      const auto& ca = g.value(a.banks[0].c[0]);
      const auto& cb = g.value(b.banks[0].c[0]);
      for (std::size_t i = 0; i < ca.size(); ++i) bad += ca[i] != cb[i];
    }
  }
  return bad;
}

/// Runs a random hard schedule (batch 2, rows gated independently) and
/// counts carried entries above the gate that differ bitwise from the
/// prior step. Carried means h and c, except FGP LSTM which freezes only c.
inline std::size_t pass_through_violations(Variant v, std::uint64_t seed, std::size_t steps = 10) {
  const auto spec = small_variant_spec(v, 4);
  ParameterSet<double> ps;
  CounterRng rng(seed, "pass_through");
  const auto model = gated::RecurrentModel<double>::create(ps, "m", spec, rng);
  for (const auto& p : ps.all()) {
    for (auto& x : p->value.values()) x += rng.uniform(-0.5, 0.5);
  }
  const std::size_t batch = 2;
  const auto xs = random_sequence(rng, steps, batch, spec.input_dim);
  const bool lstm = gated::cell_kind(v) == cells::CellKind::kLstm;
  const bool h_frozen = !(lstm && gated::is_fgp(v));
  Graph<double> g;
  auto state = model.zero_state(g, batch);
  std::size_t bad = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<int> d;
    for (std::size_t b = 0; b < batch; ++b) d.push_back(static_cast<int>(rng.uniform_int(1, spec.levels())));
    const auto before = state;
    model.step(g, state, g.constant(xs[t]), gated::StepGate<double>::hard(d));
    for (std::size_t bank = 0; bank < state.banks.size(); ++bank) {
      for (std::size_t k = 0; k < state.banks[bank].size(); ++k) {
        for (std::size_t b = 0; b < batch; ++b) {
          if (static_cast<int>(k) + 1 <= d[b]) continue;
          auto compare = [&](Var now, Var prev) {
            const auto& x = g.value(now);
            const auto& y = g.value(prev);
            for (std::size_t j = 0; j < x.cols(); ++j) bad += x.at(b, j) != y.at(b, j);
          };
          if (h_frozen) compare(state.banks[bank].h[k], before.banks[bank].h[k]);
          if (lstm) compare(state.banks[bank].c[k], before.banks[bank].c[k]);
        }
      }
    }
  }
  return bad;
}

/// Max-abs gap between the soft FGP RNN (s = 50, half-integer dbar) and
/// the hard model with d = ceil(dbar) over a 20-step sequence.
inline double hard_soft_gap(std::uint64_t seed, std::size_t steps = 20) {
  ModelSpec spec{Variant::kFgpRnn, 3, 5, 4, 1, 0, 50.0};
  ParameterSet<double> ps;
  CounterRng rng(seed, "hard_soft");
  const auto model = gated::RecurrentModel<double>::create(ps, "m", spec, rng);
  const auto xs = random_sequence(rng, steps, 1, 3);
  Graph<double> g;
  auto hard = model.zero_state(g, 1);
  auto soft = model.zero_state(g, 1);
  double worst = 0.0;
  for (const auto& x : xs) {
    const double dbar = static_cast<double>(rng.uniform_int(0, 3)) + 0.5;
    const auto& a = g.value(model.step(g, hard, g.constant(x),
                                       gated::StepGate<double>::hard({static_cast<int>(std::ceil(dbar))})));
    const auto& b = g.value(model.step(g, soft, g.constant(x),
                                       gated::StepGate<double>::soft(g.constant(Tensor<double>({1, 1}, {dbar})), 50.0)));
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

}  // namespace fgrnn::check
