// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fgrnn/autodiff/parameter.hpp"
#include "fgrnn/autodiff/tensor.hpp"

namespace fgrnn::ad {

/// Handle to a node of one Graph. Cheap to copy; meaningless across graphs.
struct Var {
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kNone;
  bool valid() const { return id != kNone; }
  friend bool operator==(Var a, Var b) { return a.id == b.id; }
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Define-by-run tape. Every operator evaluates eagerly and, when any input
/// needs a gradient, records a backward closure. Nodes are appended in
/// evaluation order, so the tape is already topologically sorted and
/// backward() is a single reverse sweep.
///
/// Operator set (closed): affine, matmul, add, sub, mul, scale,
/// affine_scalar, tanh, sigmoid, softmax, log_softmax, concat/slice over
/// rows and columns, embedding, dropout, row_select, lerp_rows, sum, mean,
/// nll, standardize. Bias-add inside affine is the only broadcast, apart
/// from the [B,1] column that lerp_rows spreads across a row.
///
/// A graph must not be used from two threads at once.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves ------------------------------------------------------------------
  /// Leaf bound to a parameter; repeated calls return the same node.
  Var parameter(const ParamRef<T>& param);
  Var constant(Tensor<T> value);
  /// Named leaf input. Inputs never receive gradients unless `track` is set,
  /// in which case grad() exposes them after backward().
  Var input(const std::string& name, Tensor<T> value, bool track = false);
  Var input_var(const std::string& name) const;

  // Operators ---------------------------------------------------------------
  /// x [B,in], weight [out,in], optional bias [out]: x * weight^T + bias.
  Var affine(Var x, Var weight, Var bias = {});
  /// a [m,k] * b [k,n].
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, T factor);
  /// factor * x + offset, elementwise.
  Var affine_scalar(Var x, T factor, T offset);
  Var tanh(Var x);
  Var sigmoid(Var x);
  /// Row-wise softmax / log-softmax.
  Var softmax(Var x);
  Var log_softmax(Var x);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var x, std::size_t begin, std::size_t count);
  Var concat_rows(std::span<const Var> parts);
  Var slice_rows(Var x, std::size_t begin, std::size_t count);
  /// Rows of table [V,E] gathered by ids; result [ids.size(), E].
  Var embedding(Var table, std::span<const std::int32_t> ids);
  /// x * mask with a constant mask of identical shape.
  Var dropout(Var x, const Tensor<T>& mask);
  /// Row r of the result is row r of `first` when take_first[r] != 0, else
  /// row r of `second`. Values are copied, never recomputed.
  Var row_select(std::span<const std::uint8_t> take_first, Var first, Var second);
  /// (1 - alpha) * update + alpha * keep, with alpha [B,1] spread over each row.
  Var lerp_rows(Var update, Var keep, Var alpha);
  Var sum(Var x);
  Var mean(Var x);
  /// Mean of -logp[i, targets[i]] over rows whose target is >= 0.
  Var nll(Var log_probs, std::span<const std::int32_t> targets);
  /// (x - mean) / max(std, std_floor) over the positions where mask != 0
  /// (population statistics). Masked-out positions output 0. An empty mask
  /// means every position counts.
  Var standardize(Var x, std::span<const std::uint8_t> mask, T std_floor);

  // Evaluation --------------------------------------------------------------
  /// The reference stays valid for the graph's lifetime.
  const Tensor<T>& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Accumulates into Parameter::grad of
  /// every trainable parameter reachable from the loss. One call per graph.
  void backward(Var loss);
  /// Gradient of a node after backward(); zeros if no gradient reached it.
  Tensor<T> grad(Var v) const;
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    Parameter<T>* param = nullptr;
    std::function<void()> backward;
    const char* op = "";
  };

  Var push(const char* op, Tensor<T> value, bool needs_grad);
  Node& node(Var v);
  const Node& node(Var v) const;
  Tensor<T>& grad_buffer(std::uint32_t id);
  bool any_grad(std::initializer_list<Var> vars) const;
  std::string describe(Var v) const;

  std::deque<Node> nodes_;  // stable addresses: value() references survive later pushes
  std::unordered_map<const Parameter<T>*, std::uint32_t> param_nodes_;
  std::map<std::string, std::uint32_t> inputs_;
  bool backward_done_ = false;
};

/// Zeroes every gradient in `params`, runs backward from `loss`, and returns
/// a copy of the gradients by name (zeros for parameters the loss ignores).
template <typename T>
std::map<std::string, Tensor<T>> backward_grads(Graph<T>& graph, Var loss, ParameterSet<T>& params);

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace fgrnn::ad
