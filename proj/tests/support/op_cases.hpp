// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "fgrnn/autodiff/optim.hpp"
#include "support/gradcheck.hpp"

namespace fgrnn::check {

/// One operator under gradient check: `make` creates random parameters in
/// `params` and returns a builder that applies the operator to them.
struct OpCase {
  std::string name;
  std::function<Builder(ParameterSet<double>&, CounterRng&)> make;
};

inline std::vector<OpCase> operator_cases() {
  using P = ParameterSet<double>;
  std::vector<OpCase> cases;
  cases.push_back({"affine", [](P& ps, CounterRng& r) -> Builder {
                     auto x = random_param(ps, "x", {3, 4}, r);
                     auto w = random_param(ps, "w", {5, 4}, r);
                     auto b = random_param(ps, "b", {5}, r);
                     return [=](Graph<double>& g) { return g.affine(g.parameter(x), g.parameter(w), g.parameter(b)); };
                   }});
  cases.push_back({"matmul", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {3, 4}, r);
                     auto b = random_param(ps, "b", {4, 2}, r);
                     return [=](Graph<double>& g) { return g.matmul(g.parameter(a), g.parameter(b)); };
                   }});
  cases.push_back({"add", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {2, 3}, r);
                     auto b = random_param(ps, "b", {2, 3}, r);
                     return [=](Graph<double>& g) { return g.add(g.parameter(a), g.parameter(b)); };
                   }});
  cases.push_back({"sub", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {2, 3}, r);
                     auto b = random_param(ps, "b", {2, 3}, r);
                     return [=](Graph<double>& g) { return g.sub(g.parameter(a), g.parameter(b)); };
                   }});
  cases.push_back({"mul", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {2, 3}, r);
                     auto b = random_param(ps, "b", {2, 3}, r);
                     return [=](Graph<double>& g) { return g.mul(g.parameter(a), g.parameter(b)); };
                   }});
  cases.push_back({"mul_self", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {2, 3}, r);
                     return [=](Graph<double>& g) {
                       Var v = g.parameter(a);
                       return g.mul(v, v);
                     };
                   }});
  cases.push_back({"scale", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {2, 3}, r);
                     const double f = r.uniform(-2.0, 2.0);
                     return [=](Graph<double>& g) { return g.scale(g.parameter(a), f); };
                   }});
  cases.push_back({"affine_scalar", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {2, 3}, r);
                     const double f = r.uniform(-2.0, 2.0);
                     const double o = r.uniform(-2.0, 2.0);
                     return [=](Graph<double>& g) { return g.affine_scalar(g.parameter(a), f, o); };
                   }});
  cases.push_back({"tanh", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {3, 3}, r, -2.0, 2.0);
                     return [=](Graph<double>& g) { return g.tanh(g.parameter(a)); };
                   }});
  cases.push_back({"sigmoid", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {3, 3}, r, -3.0, 3.0);
                     return [=](Graph<double>& g) { return g.sigmoid(g.parameter(a)); };
                   }});
  cases.push_back({"softmax", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {3, 5}, r, -2.0, 2.0);
                     return [=](Graph<double>& g) { return g.softmax(g.parameter(a)); };
                   }});
  cases.push_back({"log_softmax", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {3, 5}, r, -2.0, 2.0);
                     return [=](Graph<double>& g) { return g.log_softmax(g.parameter(a)); };
                   }});
  cases.push_back({"concat_cols", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {2, 3}, r);
                     auto b = random_param(ps, "b", {2, 1}, r);
                     return [=](Graph<double>& g) {
                       const Var parts[] = {g.parameter(a), g.parameter(b), g.parameter(a)};
                       return g.concat_cols(parts);
                     };
                   }});
  cases.push_back({"slice_cols", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {2, 5}, r);
                     return [=](Graph<double>& g) { return g.slice_cols(g.parameter(a), 1, 3); };
                   }});
  cases.push_back({"concat_rows", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {2, 3}, r);
                     auto b = random_param(ps, "b", {1, 3}, r);
                     return [=](Graph<double>& g) {
                       const Var parts[] = {g.parameter(a), g.parameter(b)};
                       return g.concat_rows(parts);
                     };
                   }});
  cases.push_back({"slice_rows", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {4, 3}, r);
                     return [=](Graph<double>& g) { return g.slice_rows(g.parameter(a), 1, 2); };
                   }});
  cases.push_back({"embedding", [](P& ps, CounterRng& r) -> Builder {
                     auto table = random_param(ps, "table", {5, 3}, r);
                     std::vector<std::int32_t> ids;
                     for (int i = 0; i < 6; ++i) ids.push_back(static_cast<std::int32_t>(r.uniform_int(0, 4)));
                     return [=](Graph<double>& g) { return g.embedding(g.parameter(table), ids); };
                   }});
  cases.push_back({"dropout", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {3, 4}, r);
                     auto mask = ad::sample_dropout_mask<double>({3, 4}, 0.5, r);
                     return [=](Graph<double>& g) { return g.dropout(g.parameter(a), mask); };
                   }});
  cases.push_back({"row_select", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {4, 3}, r);
                     auto b = random_param(ps, "b", {4, 3}, r);
                     std::vector<std::uint8_t> flags;
                     for (int i = 0; i < 4; ++i) flags.push_back(r.bernoulli(0.5) ? 1 : 0);
                     return [=](Graph<double>& g) { return g.row_select(flags, g.parameter(a), g.parameter(b)); };
                   }});
  cases.push_back({"lerp_rows", [](P& ps, CounterRng& r) -> Builder {
                     auto u = random_param(ps, "u", {3, 4}, r);
                     auto k = random_param(ps, "k", {3, 4}, r);
                     auto alpha = random_param(ps, "alpha", {3, 1}, r, 0.0, 1.0);
                     return [=](Graph<double>& g) {
                       return g.lerp_rows(g.parameter(u), g.parameter(k), g.parameter(alpha));
                     };
                   }});
  cases.push_back({"sum", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {3, 4}, r);
                     return [=](Graph<double>& g) { return g.sum(g.parameter(a)); };
                   }});
  cases.push_back({"mean", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {3, 4}, r);
                     return [=](Graph<double>& g) { return g.mean(g.parameter(a)); };
                   }});
  cases.push_back({"nll", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {4, 5}, r, -2.0, 2.0);
                     std::vector<std::int32_t> targets;
                     for (int i = 0; i < 4; ++i) targets.push_back(static_cast<std::int32_t>(r.uniform_int(0, 4)));
                     targets[1] = -1;
                     return [=](Graph<double>& g) { return g.nll(g.log_softmax(g.parameter(a)), targets); };
                   }});
  cases.push_back({"standardize", [](P& ps, CounterRng& r) -> Builder {
                     auto a = random_param(ps, "a", {6, 1}, r, -2.0, 2.0);
                     std::vector<std::uint8_t> mask = {1, 1, 0, 1, 1, 1};
                     return [=](Graph<double>& g) { return g.standardize(g.parameter(a), mask, 1e-5); };
                   }});
  return cases;
}

}  // namespace fgrnn::check
