// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "fgrnn/gated/gated.hpp"
#include "support/gradcheck.hpp"

using namespace fgrnn;
using namespace fgrnn::ad;
using namespace fgrnn::gated;
using cells::CellKind;

namespace {

using Gate = StepGate<double>;

std::vector<Var> random_inputs(Graph<double>& g, CounterRng& rng, std::size_t steps, std::size_t batch,
                               std::size_t dim) {
  std::vector<Var> xs;
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor<double> x = Tensor<double>::matrix(batch, dim);
    for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
    xs.push_back(g.constant(std::move(x)));
  }
  return xs;
}

std::vector<ComponentBank> run_fgp(Graph<double>& g, const FgpLayer<double>& layer, const std::vector<Var>& xs,
                                   const std::vector<Gate>& gates) {
  std::vector<ComponentBank> out;
  ComponentBank bank = layer.zero_bank(g, g.value(xs[0]).rows());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    bank = layer.step(g, bank, xs[t], gates[t]);
    out.push_back(bank);
  }
  return out;
}

Gate hard1(int d) { return Gate::hard({d}); }

}  // namespace

TEST(FgpRnn, InactiveComponentIsCarriedExactly) {
  ParameterSet<double> ps;
  CounterRng rng(1, "init");
  auto layer = FgpLayer<double>::create(ps, "fgp", CellKind::kRnn, 2, 3, 4, rng);
  Graph<double> g;
  const auto xs = random_inputs(g, rng, 2, 1, 3);
  auto bank = layer.step(g, layer.zero_bank(g, 1), xs[0], hard1(2));
  const auto before = bank;
  bank = fgp_rnn_step(g, layer, bank, xs[1], hard1(1));
  EXPECT_EQ(bank.h[1], before.h[1]);
  EXPECT_EQ(g.value(bank.h[1]), g.value(before.h[1]));
  EXPECT_NE(g.value(bank.h[0]), g.value(before.h[0]));
}

TEST(FgpRnn, FullGateEqualsIndependentCells) {
  ParameterSet<double> ps;
  CounterRng rng(2, "init");
  auto layer = FgpLayer<double>::create(ps, "fgp", CellKind::kRnn, 3, 2, 4, rng);
  Graph<double> g;
  const auto xs = random_inputs(g, rng, 1, 2, 2);
  const auto prev = layer.zero_bank(g, 2);
  const auto bank = layer.step(g, prev, xs[0], Gate::hard({3, 3}));
  for (std::size_t k = 0; k < 3; ++k) {
    Var h = cells::rnn_step(g, std::get<cells::RnnCell<double>>(layer.cells()[k]), xs[0], prev.h[k]);
    EXPECT_EQ(g.value(bank.h[k]), g.value(h));
  }
}

TEST(FgpRnn, OutOfRangeGateThrows) {
  ParameterSet<double> ps;
  CounterRng rng(3, "init");
  auto layer = FgpLayer<double>::create(ps, "fgp", CellKind::kRnn, 2, 2, 2, rng);
  Graph<double> g;
  Var x = random_inputs(g, rng, 1, 1, 2)[0];
  EXPECT_THROW(layer.step(g, layer.zero_bank(g, 1), x, hard1(0)), std::out_of_range);
  EXPECT_THROW(layer.step(g, layer.zero_bank(g, 1), x, hard1(3)), std::out_of_range);
  EXPECT_THROW(layer.step(g, layer.zero_bank(g, 1), x, Gate::hard({1, 1})), ShapeError);
}

TEST(FgpRnn, WrongKindRejected) {
  ParameterSet<double> ps;
  CounterRng rng(3, "init");
  auto layer = FgpLayer<double>::create(ps, "fgp", CellKind::kLstm, 2, 2, 2, rng);
  Graph<double> g;
  Var x = random_inputs(g, rng, 1, 1, 2)[0];
  EXPECT_THROW(fgp_rnn_step(g, layer, layer.zero_bank(g, 1), x, hard1(1)), std::invalid_argument);
}

TEST(FgpRnn, SingleComponentMatchesVanillaTrace) {
  for (CellKind kind : {CellKind::kRnn, CellKind::kLstm}) {
    ParameterSet<double> ps;
    CounterRng rng(4, "init");
    auto layer = FgpLayer<double>::create(ps, "fgp", kind, 1, 3, 5, rng);
    Graph<double> g;
    const auto xs = random_inputs(g, rng, 20, 2, 3);
    const auto fgp = run_fgp(g, layer, xs, std::vector<Gate>(20, Gate::hard({1, 1})));
    const auto& cell = layer.cells()[0];
    const auto vanilla = cells::unroll<double>(g, cell, xs, cells::zero_state(g, cell, 2));
    for (std::size_t t = 0; t < 20; ++t) {
      EXPECT_EQ(g.value(fgp[t].h[0]), g.value(vanilla.h[t]));
      if (kind == CellKind::kLstm) EXPECT_EQ(g.value(fgp[t].c[0]), g.value(vanilla.c[t]));
    }
  }
}

TEST(FgpLstm, FrozenCellWithZeroOutputGate) {
  ParameterSet<double> ps;
  CounterRng rng(5, "init");
  auto layer = FgpLayer<double>::create(ps, "fgp", CellKind::kLstm, 2, 2, 3, rng);
  auto& cell = std::get<cells::LstmCell<double>>(layer.cells()[1]);
  // output gate block [3h, 4h)
  for (std::size_t r = 9; r < 12; ++r) {
    for (std::size_t c = 0; c < 2; ++c) cell.w_ih->value.at(r, c) = 0.0;
    for (std::size_t c = 0; c < 3; ++c) cell.w_hh->value.at(r, c) = 0.0;
    cell.b_ih->value[r] = 0.0;
    cell.b_hh->value[r] = 0.0;
  }
  Graph<double> g;
  const auto xs = random_inputs(g, rng, 2, 1, 2);
  ComponentBank bank = layer.step(g, layer.zero_bank(g, 1), xs[0], hard1(2));
  const auto prev = bank;
  bank = fgp_lstm_step(g, layer, bank, xs[1], hard1(1));
  EXPECT_EQ(g.value(bank.c[1]), g.value(prev.c[1]));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(g.value(bank.h[1])[j], 0.5 * std::tanh(g.value(prev.c[1])[j]));
  }
}

TEST(FgpLstm, HiddenStateRecomputedWhileCellFrozen) {
  ParameterSet<double> ps;
  CounterRng rng(6, "init");
  auto layer = FgpLayer<double>::create(ps, "fgp", CellKind::kLstm, 2, 2, 3, rng);
  Graph<double> g;
  const auto xs = random_inputs(g, rng, 3, 1, 2);
  ComponentBank bank = layer.step(g, layer.zero_bank(g, 1), xs[0], hard1(2));
  bank = layer.step(g, bank, xs[1], hard1(2));
  const auto prev = bank;
  bank = layer.step(g, bank, xs[2], hard1(1));
  EXPECT_EQ(g.value(bank.c[1]), g.value(prev.c[1]));
  EXPECT_NE(g.value(bank.h[1]), g.value(prev.h[1]));
}

TEST(StackedFgp, SingleLayerEqualsFgpLayer) {
  ParameterSet<double> ps;
  CounterRng rng(7, "init");
  auto stack = StackedFgp<double>::create(ps, "s", CellKind::kRnn, 1, 2, 3, 4, 5, rng);
  Graph<double> g;
  const auto xs = random_inputs(g, rng, 6, 1, 3);
  std::vector<Gate> gates;
  for (int t = 0; t < 6; ++t) gates.push_back(hard1(1 + t % 2));
  const auto trace = stacked_fgp_forward<double>(g, stack, xs, gates);
  const auto ref = run_fgp(g, stack.fgp_layers()[0], xs, gates);
  for (std::size_t t = 0; t < 6; ++t) {
    EXPECT_EQ(g.value(concat_bank(g, trace[t][0])), g.value(concat_bank(g, ref[t])));
  }
}

TEST(StackedFgp, ProjectionShapes) {
  ParameterSet<double> ps;
  CounterRng rng(8, "init");
  auto stack = StackedFgp<double>::create(ps, "s", CellKind::kRnn, 3, 2, 5, 4, 6, rng);
  ASSERT_EQ(stack.projections().size(), 2u);
  for (const auto& p : stack.projections()) {
    EXPECT_EQ(p.w_oh->value.shape(), (Shape{6, 8}));
    EXPECT_EQ(p.input_dim, 8u);
  }
  EXPECT_EQ(stack.fgp_layers()[1].input_dim(), 6u);
  Graph<double> g;
  const auto xs = random_inputs(g, rng, 3, 2, 5);
  const auto trace = stacked_fgp_forward<double>(g, stack, xs, std::vector<Gate>(3, Gate::hard({2, 1})));
  EXPECT_EQ(g.shape(concat_bank(g, trace.back()[2])), (Shape{2, 8}));
}

TEST(StackedFgp, ProjectionMismatchThrows) {
  ParameterSet<double> ps;
  CounterRng rng(9, "init");
  std::vector<FgpLayer<double>> layers;
  layers.push_back(FgpLayer<double>::create(ps, "a", CellKind::kRnn, 2, 3, 4, rng));
  layers.push_back(FgpLayer<double>::create(ps, "b", CellKind::kRnn, 2, 5, 4, rng));
  StackProjection<double> p;
  p.input_dim = 7;
  p.output_dim = 5;
  p.w_oh = ps.create("p.w", {5, 7}, Init::kUniformFanIn, rng);
  p.b_oh = ps.create("p.b", {5}, Init::kZeros, rng);
  EXPECT_THROW(StackedFgp<double>::from_parts(layers, {p}), ShapeError);
}

TEST(StackedFgp, FullGateEqualsStackOfParallelCells) {
  ParameterSet<double> ps;
  CounterRng rng(10, "init");
  auto stack = StackedFgp<double>::create(ps, "s", CellKind::kLstm, 2, 2, 3, 4, 5, rng);
  Graph<double> g;
  const auto xs = random_inputs(g, rng, 4, 1, 3);
  const auto trace = stacked_fgp_forward<double>(g, stack, xs, std::vector<Gate>(4, Gate::full()));
  const auto hard = stacked_fgp_forward<double>(g, stack, xs, std::vector<Gate>(4, hard1(2)));
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t l = 0; l < 2; ++l) {
      EXPECT_EQ(g.value(concat_bank(g, trace[t][l])), g.value(concat_bank(g, hard[t][l])));
    }
  }
}

TEST(Fgl, FullGateEqualsDeepStack) {
  for (CellKind kind : {CellKind::kRnn, CellKind::kLstm}) {
    ParameterSet<double> ps;
    CounterRng rng(11, "init");
    auto stack = FglStack<double>::create(ps, "fgl", kind, 3, 2, 4, rng);
    Graph<double> g;
    const auto xs = random_inputs(g, rng, 5, 2, 2);
    ComponentBank bank = stack.zero_bank(g, 2);
    std::vector<cells::CellState> deep;
    for (const auto& cell : stack.cells()) deep.push_back(cells::zero_state(g, cell, 2));
    for (Var x : xs) {
      bank = stack.step(g, bank, x, Gate::hard({3, 3}));
      Var in = x;
      for (std::size_t l = 0; l < 3; ++l) {
        deep[l] = cells::cell_step(g, stack.cells()[l], in, deep[l]);
        in = deep[l].h;
      }
      for (std::size_t l = 0; l < 3; ++l) {
        EXPECT_EQ(g.value(bank.h[l]), g.value(deep[l].h));
        if (kind == CellKind::kLstm) EXPECT_EQ(g.value(bank.c[l]), g.value(deep[l].c));
      }
    }
  }
}

TEST(Fgl, LowGateCarriesUpperLayersExactly) {
  for (CellKind kind : {CellKind::kRnn, CellKind::kLstm}) {
    ParameterSet<double> ps;
    CounterRng rng(12, "init");
    auto stack = FglStack<double>::create(ps, "fgl", kind, 3, 2, 4, rng);
    Graph<double> g;
    const auto xs = random_inputs(g, rng, 2, 1, 2);
    auto bank = stack.step(g, stack.zero_bank(g, 1), xs[0], hard1(3));
    const auto prev = bank;
    bank = kind == CellKind::kRnn ? fgl_rnn_step(g, stack, bank, xs[1], hard1(1))
                                  : fgl_lstm_step(g, stack, bank, xs[1], hard1(1));
    for (std::size_t l = 1; l < 3; ++l) {
      EXPECT_EQ(g.value(bank.h[l]), g.value(prev.h[l]));
      if (kind == CellKind::kLstm) EXPECT_EQ(g.value(bank.c[l]), g.value(prev.c[l]));
    }
    EXPECT_NE(g.value(bank.h[0]), g.value(prev.h[0]));
  }
}

TEST(Fgl, SingleLayerMatchesVanilla) {
  for (CellKind kind : {CellKind::kRnn, CellKind::kLstm}) {
    ParameterSet<double> ps;
    CounterRng rng(13, "init");
    auto stack = FglStack<double>::create(ps, "fgl", kind, 1, 3, 4, rng);
    Graph<double> g;
    const auto xs = random_inputs(g, rng, 10, 1, 3);
    const auto& cell = stack.cells()[0];
    const auto vanilla = cells::unroll<double>(g, cell, xs, cells::zero_state(g, cell, 1));
    auto bank = stack.zero_bank(g, 1);
    for (std::size_t t = 0; t < xs.size(); ++t) {
      bank = stack.step(g, bank, xs[t], hard1(1));
      EXPECT_EQ(g.value(bank.h[0]), g.value(vanilla.h[t]));
    }
  }
}

TEST(Fgl, OutOfRangeGateThrows) {
  ParameterSet<double> ps;
  CounterRng rng(14, "init");
  auto stack = FglStack<double>::create(ps, "fgl", CellKind::kRnn, 2, 2, 2, rng);
  Graph<double> g;
  Var x = random_inputs(g, rng, 1, 1, 2)[0];
  EXPECT_THROW(stack.step(g, stack.zero_bank(g, 1), x, hard1(3)), std::out_of_range);
}

TEST(MixedBatch, RowsFollowTheirOwnGates) {
  ParameterSet<double> ps;
  CounterRng rng(15, "init");
  auto layer = FgpLayer<double>::create(ps, "fgp", CellKind::kLstm, 3, 2, 3, rng);
  Graph<double> g;
  const auto xs = random_inputs(g, rng, 5, 2, 2);
  std::vector<Gate> both;
  std::vector<Gate> row0;
  std::vector<Gate> row1;
  for (int t = 0; t < 5; ++t) {
    const int a = 1 + t % 3;
    const int b = 3 - t % 3;
    both.push_back(Gate::hard({a, b}));
    row0.push_back(hard1(a));
    row1.push_back(hard1(b));
  }
  std::vector<Var> xs0;
  std::vector<Var> xs1;
  for (Var x : xs) {
    xs0.push_back(g.slice_rows(x, 0, 1));
    xs1.push_back(g.slice_rows(x, 1, 1));
  }
  const auto joint = run_fgp(g, layer, xs, both);
  const auto alone0 = run_fgp(g, layer, xs0, row0);
  const auto alone1 = run_fgp(g, layer, xs1, row1);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& v = g.value(joint[t].h[k]);
      for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_EQ(v.at(0, j), g.value(alone0[t].h[k])[j]);
        EXPECT_EQ(v.at(1, j), g.value(alone1[t].h[k])[j]);
      }
    }
  }
}

TEST(GateCoefficients, TabulatedValues) {
  const auto low = gate_coefficients(0.5, 4, 4.0);
  const double expect_low[] = {0.11920, 0.88080, 0.99753, 0.99995};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(low.alpha[k], expect_low[k], 1e-5);
  const auto high = gate_coefficients(2.5, 4, 4.0);
  const double expect_high[] = {4.54e-5, 0.00247, 0.11920, 0.88080};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(high.alpha[k], expect_high[k], 1e-5);
}

TEST(GateCoefficients, SaturationAndMonotonicity) {
  const auto far = gate_coefficients(1e6, 6, 4.0);
  for (double a : far.alpha) EXPECT_LT(a, 1e-12);
  CounterRng rng(1, "coef");
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = gate_coefficients(rng.uniform(-3.0, 15.0), 12, rng.uniform(1.1, 60.0));
    for (std::size_t k = 1; k < c.alpha.size(); ++k) EXPECT_LE(c.alpha[k - 1], c.alpha[k]);
  }
  EXPECT_THROW(gate_coefficients(1.0, 4, 1.0), std::invalid_argument);
}

TEST(GateCoefficients, GraphFormMatchesScalarForm) {
  Graph<double> g;
  Var dbar = g.constant(Tensor<double>({2, 1}, {0.5, 2.5}));
  for (int k = 1; k <= 4; ++k) {
    const auto& a = g.value(gate_alpha(g, dbar, k, 4.0));
    EXPECT_NEAR(a[0], gate_coefficients(0.5, 4, 4.0).alpha[k - 1], 1e-15);
    EXPECT_NEAR(a[1], gate_coefficients(2.5, 4, 4.0).alpha[k - 1], 1e-15);
  }
}

TEST(SoftGateCombine, EndpointsAndMidpoint) {
  Graph<double> g;
  Var cand = g.constant(Tensor<double>({1, 2}, {2.0, -4.0}));
  Var prev = g.constant(Tensor<double>({1, 2}, {0.0, 6.0}));
  auto at = [&](double a) { return g.value(soft_gate_combine(g, cand, prev, g.constant(Tensor<double>({1, 1}, {a})))); };
  const Tensor<double> prev_value = g.value(prev);
  const Tensor<double> cand_value = g.value(cand);
  EXPECT_EQ(at(1.0), prev_value);
  EXPECT_EQ(at(0.0), cand_value);
  EXPECT_EQ(at(0.5)[0], 1.0);
}

TEST(HardSoft, SteepSoftGateTracksCeilingOfHalfIntegers) {
  ParameterSet<double> ps;
  CounterRng rng(16, "init");
  const std::size_t K = 4;
  auto layer = FgpLayer<double>::create(ps, "fgp", CellKind::kRnn, K, 3, 5, rng);
  Graph<double> g;
  const auto xs = random_inputs(g, rng, 20, 1, 3);
  std::vector<Gate> hard;
  std::vector<Gate> soft;
  for (int t = 0; t < 20; ++t) {
    const double dbar = static_cast<double>(rng.uniform_int(0, K - 1)) + 0.5;
    hard.push_back(hard1(static_cast<int>(std::ceil(dbar))));
    soft.push_back(Gate::soft(g.constant(Tensor<double>({1, 1}, {dbar})), 50.0));
  }
  const auto a = run_fgp(g, layer, xs, hard);
  const auto b = run_fgp(g, layer, xs, soft);
  double worst = 0.0;
  for (std::size_t t = 0; t < 20; ++t) {
    const auto& va = g.value(concat_bank(g, a[t]));
    const auto& vb = g.value(concat_bank(g, b[t]));
    for (std::size_t i = 0; i < va.size(); ++i) worst = std::max(worst, std::abs(va[i] - vb[i]));
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(Locality, RaisingGateLeavesLowerComponentsUnchanged) {
  CounterRng rng(17, "locality");
  for (int trial = 0; trial < 50; ++trial) {
    ParameterSet<double> ps;
    auto layer = FgpLayer<double>::create(ps, "fgp", CellKind::kLstm, 4, 2, 3, rng);
    Graph<double> g;
    const auto xs = random_inputs(g, rng, 2, 1, 2);
    const auto bank = layer.step(g, layer.zero_bank(g, 1), xs[0], hard1(4));
    const int d_old = static_cast<int>(rng.uniform_int(1, 4));
    const int d_new = static_cast<int>(rng.uniform_int(1, 4));
    const auto a = layer.step(g, bank, xs[1], hard1(d_old));
    const auto b = layer.step(g, bank, xs[1], hard1(d_new));
    for (int k = 0; k < std::min(d_old, d_new); ++k) {
      EXPECT_EQ(g.value(a.h[k]), g.value(b.h[k]));
      EXPECT_EQ(g.value(a.c[k]), g.value(b.c[k]));
    }
  }
}

TEST(SoftGradient, ReachesDbarAndMatchesFiniteDifferences) {
  for (CellKind kind : {CellKind::kRnn, CellKind::kLstm}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      ParameterSet<double> ps;
      CounterRng rng(seed, "init");
      auto layer = FgpLayer<double>::create(ps, "fgp", kind, 3, 2, 3, rng);
      ps.set_trainable(false);
      auto dbar = check::random_param(ps, "dbar", {5, 1}, rng, -0.5, 3.5);
      std::vector<Tensor<double>> inputs;
      for (int t = 0; t < 5; ++t) {
        Tensor<double> x = Tensor<double>::matrix(1, 2);
        for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
        inputs.push_back(x);
      }
      auto build = [&](Graph<double>& g) {
        Var d = g.parameter(dbar);
        ComponentBank bank = layer.zero_bank(g, 1);
        std::vector<Var> outs;
        for (std::size_t t = 0; t < 5; ++t) {
          bank = layer.step(g, bank, g.constant(inputs[t]), Gate::soft(g.slice_rows(d, t, 1), 4.0));
          outs.push_back(concat_bank(g, bank));
        }
        return g.concat_rows(std::span<const Var>(outs));
      };
      Graph<double> g;
      Var loss = check::project(g, build(g), seed);
      const auto grads = backward_grads(g, loss, ps);
      double norm = 0.0;
      for (double v : grads.at("dbar").values()) norm += v * v;
      EXPECT_GT(norm, 0.0);
      EXPECT_LT(check::grad_check(ps, build, seed).max_rel_error, 1e-4);
    }
  }
}
