// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/autodiff/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace fgrnn::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<RowMat<T>> as_mat(Tensor<T>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <typename T>
Eigen::Map<const RowMat<T>> as_mat(const Tensor<T>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) {
    const T z = std::exp(-x);
    return T{1} / (T{1} + z);
  }
  const T z = std::exp(x);
  return z / (T{1} + z);
}

}  // namespace

// ---------------------------------------------------------------------------
// Bookkeeping

template <typename T>
Var Graph<T>::push(const char* op, Tensor<T> value, bool needs_grad) {
  if (backward_done_) throw GraphError(std::string(op) + ": graph already consumed by backward()");
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.op = op;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw GraphError("invalid variable handle");
  return nodes_[v.id];
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw GraphError("invalid variable handle");
  return nodes_[v.id];
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor<T>::zeros_like(n.value);
  return n.grad;
}

template <typename T>
bool Graph<T>::any_grad(std::initializer_list<Var> vars) const {
  for (Var v : vars) {
    if (v.valid() && node(v).needs_grad) return true;
  }
  return false;
}

template <typename T>
std::string Graph<T>::describe(Var v) const {
  return shape_string(node(v).value.shape());
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return node(v).value;
}

template <typename T>
bool Graph<T>::requires_grad(Var v) const {
  return node(v).needs_grad;
}

// ---------------------------------------------------------------------------
// Leaves

template <typename T>
Var Graph<T>::parameter(const ParamRef<T>& param) {
  if (!param) throw GraphError("parameter: null reference");
  auto it = param_nodes_.find(param.get());
  if (it != param_nodes_.end()) return Var{it->second};
  Var v = push("parameter", param->value, param->trainable);
  nodes_[v.id].param = param.get();
  param_nodes_.emplace(param.get(), v.id);
  return v;
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  return push("constant", std::move(value), false);
}

template <typename T>
Var Graph<T>::input(const std::string& name, Tensor<T> value, bool track) {
  if (inputs_.count(name)) throw GraphError("input '" + name + "' bound twice");
  Var v = push("input", std::move(value), track);
  inputs_.emplace(name, v.id);
  return v;
}

template <typename T>
Var Graph<T>::input_var(const std::string& name) const {
  auto it = inputs_.find(name);
  if (it == inputs_.end()) throw GraphError("unbound input '" + name + "'");
  return Var{it->second};
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Var Graph<T>::affine(Var x, Var weight, Var bias) {
  const auto& xv = value(x);
  const auto& wv = value(weight);
  if (wv.rank() != 2 || xv.cols() != wv.cols()) {
    throw ShapeError("affine: input " + describe(x) + " incompatible with weight " + describe(weight));
  }
  if (bias.valid() && value(bias).size() != wv.rows()) {
    throw ShapeError("affine: bias " + describe(bias) + " incompatible with weight " + describe(weight));
  }
  Tensor<T> out = Tensor<T>::matrix(xv.rows(), wv.rows());
  auto y = as_mat(out);
  y.noalias() = as_mat(xv) * as_mat(wv).transpose();
  if (bias.valid()) {
    const auto& bv = value(bias);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      T* row = out.data() + r * y.cols();
      for (Eigen::Index c = 0; c < y.cols(); ++c) row[c] += bv[c];
    }
  }
  const bool needs = any_grad({x, weight, bias});
  Var result = push("affine", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, x, weight, bias] {
      const auto gy = as_mat(nodes_[result.id].grad);
      if (nodes_[x.id].needs_grad) {
        as_mat(grad_buffer(x.id)).noalias() += gy * as_mat(nodes_[weight.id].value);
      }
      if (nodes_[weight.id].needs_grad) {
        as_mat(grad_buffer(weight.id)).noalias() += gy.transpose() * as_mat(nodes_[x.id].value);
      }
      if (bias.valid() && nodes_[bias.id].needs_grad) {
        auto& gb = grad_buffer(bias.id);
        const auto& g = nodes_[result.id].grad;
        const std::size_t cols = g.cols();
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
      }
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: left " + describe(a) + " incompatible with right " + describe(b));
  }
  Tensor<T> out = Tensor<T>::matrix(av.rows(), bv.cols());
  as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  const bool needs = any_grad({a, b});
  Var result = push("matmul", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, a, b] {
      const auto gy = as_mat(nodes_[result.id].grad);
      if (nodes_[a.id].needs_grad) {
        as_mat(grad_buffer(a.id)).noalias() += gy * as_mat(nodes_[b.id].value).transpose();
      }
      if (nodes_[b.id].needs_grad) {
        as_mat(grad_buffer(b.id)).noalias() += as_mat(nodes_[a.id].value).transpose() * gy;
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.shape() != bv.shape()) throw ShapeError("add: " + describe(a) + " vs " + describe(b));
  Tensor<T> out = av;
  out += bv;
  const bool needs = any_grad({a, b});
  Var result = push("add", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, a, b] {
      const auto& g = nodes_[result.id].grad;
      if (nodes_[a.id].needs_grad) grad_buffer(a.id) += g;
      if (nodes_[b.id].needs_grad) grad_buffer(b.id) += g;
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::sub(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.shape() != bv.shape()) throw ShapeError("sub: " + describe(a) + " vs " + describe(b));
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const bool needs = any_grad({a, b});
  Var result = push("sub", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, a, b] {
      const auto& g = nodes_[result.id].grad;
      if (nodes_[a.id].needs_grad) grad_buffer(a.id) += g;
      if (nodes_[b.id].needs_grad) {
        auto& gb = grad_buffer(b.id);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.shape() != bv.shape()) throw ShapeError("mul: " + describe(a) + " vs " + describe(b));
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const bool needs = any_grad({a, b});
  Var result = push("mul", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, a, b] {
      const auto& g = nodes_[result.id].grad;
      if (nodes_[a.id].needs_grad) {
        auto& ga = grad_buffer(a.id);
        const auto& bv = nodes_[b.id].value;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (nodes_[b.id].needs_grad) {
        auto& gb = grad_buffer(b.id);
        const auto& av = nodes_[a.id].value;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::scale(Var x, T factor) {
  return affine_scalar(x, factor, T{0});
}

template <typename T>
Var Graph<T>::affine_scalar(Var x, T factor, T offset) {
  Tensor<T> out = value(x);
  for (auto& v : out.values()) v = factor * v + offset;
  const bool needs = any_grad({x});
  Var result = push("affine_scalar", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, x, factor] {
      const auto& g = nodes_[result.id].grad;
      auto& gx = grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::tanh(Var x) {
  Tensor<T> out = value(x);
  for (auto& v : out.values()) v = std::tanh(v);
  const bool needs = any_grad({x});
  Var result = push("tanh", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, x] {
      const auto& g = nodes_[result.id].grad;
      const auto& y = nodes_[result.id].value;
      auto& gx = grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (T{1} - y[i] * y[i]);
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::sigmoid(Var x) {
  Tensor<T> out = value(x);
  for (auto& v : out.values()) v = stable_sigmoid(v);
  const bool needs = any_grad({x});
  Var result = push("sigmoid", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, x] {
      const auto& g = nodes_[result.id].grad;
      const auto& y = nodes_[result.id].value;
      auto& gx = grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T{1} - y[i]);
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::softmax(Var x) {
  Tensor<T> out = value(x);
  const std::size_t rows = out.rows();
  const std::size_t cols = out.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out.data() + r * cols;
    const T peak = *std::max_element(row, row + cols);
    T total{0};
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - peak);
      total += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= total;
  }
  const bool needs = any_grad({x});
  Var result = push("softmax", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, x] {
      const auto& g = nodes_[result.id].grad;
      const auto& y = nodes_[result.id].value;
      auto& gx = grad_buffer(x.id);
      const std::size_t cols = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const std::size_t base = r * cols;
        T dot{0};
        for (std::size_t c = 0; c < cols; ++c) dot += g[base + c] * y[base + c];
        for (std::size_t c = 0; c < cols; ++c) gx[base + c] += y[base + c] * (g[base + c] - dot);
      }
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::log_softmax(Var x) {
  Tensor<T> out = value(x);
  const std::size_t rows = out.rows();
  const std::size_t cols = out.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out.data() + r * cols;
    const T peak = *std::max_element(row, row + cols);
    T total{0};
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(row[c] - peak);
    const T log_norm = peak + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) row[c] -= log_norm;
  }
  const bool needs = any_grad({x});
  Var result = push("log_softmax", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, x] {
      const auto& g = nodes_[result.id].grad;
      const auto& y = nodes_[result.id].value;
      auto& gx = grad_buffer(x.id);
      const std::size_t cols = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const std::size_t base = r * cols;
        T total{0};
        for (std::size_t c = 0; c < cols; ++c) total += g[base + c];
        for (std::size_t c = 0; c < cols; ++c) gx[base + c] += g[base + c] - std::exp(y[base + c]) * total;
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Structural

template <typename T>
Var Graph<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t total = 0;
  for (Var p : parts) {
    if (value(p).rows() != rows) {
      throw ShapeError("concat_cols: " + describe(parts[0]) + " vs " + describe(p));
    }
    total += value(p).cols();
  }
  Tensor<T> out = Tensor<T>::matrix(rows, total);
  std::size_t offset = 0;
  bool needs = false;
  for (Var p : parts) {
    const auto& pv = value(p);
    const std::size_t cols = pv.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data() + r * cols, cols, out.data() + r * total + offset);
    }
    offset += cols;
    needs = needs || node(p).needs_grad;
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  Var result = push("concat_cols", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, saved = std::move(saved)] {
      const auto& g = nodes_[result.id].grad;
      const std::size_t total = g.cols();
      std::size_t offset = 0;
      for (Var p : saved) {
        const std::size_t cols = nodes_[p.id].value.cols();
        if (nodes_[p.id].needs_grad) {
          auto& gp = grad_buffer(p.id);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < cols; ++c) gp[r * cols + c] += g[r * total + offset + c];
          }
        }
        offset += cols;
      }
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::slice_cols(Var x, std::size_t begin, std::size_t count) {
  const auto& xv = value(x);
  if (count == 0 || begin + count > xv.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + describe(x));
  }
  const std::size_t rows = xv.rows();
  const std::size_t cols = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(rows, count);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * cols + begin, count, out.data() + r * count);
  }
  const bool needs = any_grad({x});
  Var result = push("slice_cols", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, x, begin, count] {
      const auto& g = nodes_[result.id].grad;
      auto& gx = grad_buffer(x.id);
      const std::size_t cols = gx.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < count; ++c) gx[r * cols + begin + c] += g[r * count + c];
      }
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t total = 0;
  bool needs = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) {
      throw ShapeError("concat_rows: " + describe(parts[0]) + " vs " + describe(p));
    }
    total += value(p).rows();
    needs = needs || node(p).needs_grad;
  }
  Tensor<T> out = Tensor<T>::matrix(total, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& pv = value(p);
    std::copy(pv.values().begin(), pv.values().end(), out.data() + offset);
    offset += pv.size();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  Var result = push("concat_rows", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, saved = std::move(saved)] {
      const auto& g = nodes_[result.id].grad;
      std::size_t offset = 0;
      for (Var p : saved) {
        const std::size_t n = nodes_[p.id].value.size();
        if (nodes_[p.id].needs_grad) {
          auto& gp = grad_buffer(p.id);
          for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
        }
        offset += n;
      }
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::slice_rows(Var x, std::size_t begin, std::size_t count) {
  const auto& xv = value(x);
  if (count == 0 || begin + count > xv.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + describe(x));
  }
  const std::size_t cols = xv.cols();
  std::vector<T> vals(xv.data() + begin * cols, xv.data() + (begin + count) * cols);
  const bool needs = any_grad({x});
  Var result = push("slice_rows", Tensor<T>(Shape{count, cols}, std::move(vals)), needs);
  if (needs) {
    node(result).backward = [this, result, x, begin] {
      const auto& g = nodes_[result.id].grad;
      auto& gx = grad_buffer(x.id);
      const std::size_t offset = begin * gx.cols();
      for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::embedding(Var table, std::span<const std::int32_t> ids) {
  const auto& tv = value(table);
  if (tv.rank() != 2) throw ShapeError("embedding: table must be [V,E], got " + describe(table));
  if (ids.empty()) throw ShapeError("embedding: no ids");
  const std::size_t dim = tv.cols();
  Tensor<T> out = Tensor<T>::matrix(ids.size(), dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " outside table " + describe(table));
    }
    std::copy_n(tv.data() + ids[i] * dim, dim, out.data() + i * dim);
  }
  const bool needs = any_grad({table});
  Var result = push("embedding", std::move(out), needs);
  if (needs) {
    std::vector<std::int32_t> saved(ids.begin(), ids.end());
    node(result).backward = [this, result, table, saved = std::move(saved)] {
      const auto& g = nodes_[result.id].grad;
      auto& gt = grad_buffer(table.id);
      const std::size_t dim = gt.cols();
      for (std::size_t i = 0; i < saved.size(); ++i) {
        T* dst = gt.data() + saved[i] * dim;
        const T* src = g.data() + i * dim;
        for (std::size_t c = 0; c < dim; ++c) dst[c] += src[c];
      }
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::dropout(Var x, const Tensor<T>& mask) {
  const auto& xv = value(x);
  if (mask.size() != xv.size()) throw ShapeError("dropout: mask " + shape_string(mask.shape()) + " vs " + describe(x));
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const bool needs = any_grad({x});
  Var result = push("dropout", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, x, mask] {
      const auto& g = nodes_[result.id].grad;
      auto& gx = grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::row_select(std::span<const std::uint8_t> take_first, Var first, Var second) {
  const auto& av = value(first);
  const auto& bv = value(second);
  if (av.shape() != bv.shape()) throw ShapeError("row_select: " + describe(first) + " vs " + describe(second));
  if (take_first.size() != av.rows()) {
    throw ShapeError("row_select: " + std::to_string(take_first.size()) + " row flags for " + describe(first));
  }
  const std::size_t cols = av.cols();
  Tensor<T> out = bv;
  for (std::size_t r = 0; r < take_first.size(); ++r) {
    if (take_first[r]) std::copy_n(av.data() + r * cols, cols, out.data() + r * cols);
  }
  const bool needs = any_grad({first, second});
  Var result = push("row_select", std::move(out), needs);
  if (needs) {
    std::vector<std::uint8_t> flags(take_first.begin(), take_first.end());
    node(result).backward = [this, result, first, second, flags = std::move(flags)] {
      const auto& g = nodes_[result.id].grad;
      const std::size_t cols = g.cols();
      for (std::size_t r = 0; r < flags.size(); ++r) {
        const std::uint32_t target = flags[r] ? first.id : second.id;
        if (!nodes_[target].needs_grad) continue;
        auto& gt = grad_buffer(target);
        for (std::size_t c = 0; c < cols; ++c) gt[r * cols + c] += g[r * cols + c];
      }
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::lerp_rows(Var update, Var keep, Var alpha) {
  const auto& uv = value(update);
  const auto& kv = value(keep);
  const auto& av = value(alpha);
  if (uv.shape() != kv.shape()) throw ShapeError("lerp_rows: " + describe(update) + " vs " + describe(keep));
  if (av.size() != uv.rows()) {
    throw ShapeError("lerp_rows: coefficient " + describe(alpha) + " for " + describe(update));
  }
  const std::size_t cols = uv.cols();
  Tensor<T> out = uv;
  for (std::size_t r = 0; r < uv.rows(); ++r) {
    const T a = av[r];
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      out[i] = (T{1} - a) * uv[i] + a * kv[i];
    }
  }
  const bool needs = any_grad({update, keep, alpha});
  Var result = push("lerp_rows", std::move(out), needs);
  if (needs) {
    node(result).backward = [this, result, update, keep, alpha] {
      const auto& g = nodes_[result.id].grad;
      const auto& uv = nodes_[update.id].value;
      const auto& kv = nodes_[keep.id].value;
      const auto& av = nodes_[alpha.id].value;
      const std::size_t cols = g.cols();
      Tensor<T>* gu = nodes_[update.id].needs_grad ? &grad_buffer(update.id) : nullptr;
      Tensor<T>* gk = nodes_[keep.id].needs_grad ? &grad_buffer(keep.id) : nullptr;
      Tensor<T>* ga = nodes_[alpha.id].needs_grad ? &grad_buffer(alpha.id) : nullptr;
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const T a = av[r];
        T da{0};
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          if (gu) (*gu)[i] += (T{1} - a) * g[i];
          if (gk) (*gk)[i] += a * g[i];
          da += g[i] * (kv[i] - uv[i]);
        }
        if (ga) (*ga)[r] += da;
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reductions and losses

template <typename T>
Var Graph<T>::sum(Var x) {
  const auto& xv = value(x);
  T total{0};
  for (T v : xv.values()) total += v;
  const bool needs = any_grad({x});
  Var result = push("sum", Tensor<T>::scalar(total), needs);
  if (needs) {
    node(result).backward = [this, result, x] {
      const T g = nodes_[result.id].grad[0];
      for (auto& v : grad_buffer(x.id).values()) v += g;
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::mean(Var x) {
  const auto n = static_cast<T>(value(x).size());
  return scale(sum(x), T{1} / n);
}

template <typename T>
Var Graph<T>::nll(Var log_probs, std::span<const std::int32_t> targets) {
  const auto& lp = value(log_probs);
  if (targets.size() != lp.rows()) {
    throw ShapeError("nll: " + std::to_string(targets.size()) + " targets for log-probs " + describe(log_probs));
  }
  const std::size_t cols = lp.cols();
  T total{0};
  std::size_t counted = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= cols) {
      throw ShapeError("nll: target " + std::to_string(targets[r]) + " outside " + describe(log_probs));
    }
    total -= lp[r * cols + targets[r]];
    ++counted;
  }
  if (counted == 0) throw ShapeError("nll: no target positions");
  const T inv = T{1} / static_cast<T>(counted);
  const bool needs = any_grad({log_probs});
  Var result = push("nll", Tensor<T>::scalar(total * inv), needs);
  if (needs) {
    std::vector<std::int32_t> saved(targets.begin(), targets.end());
    node(result).backward = [this, result, log_probs, inv, saved = std::move(saved)] {
      const T g = nodes_[result.id].grad[0];
      auto& gl = grad_buffer(log_probs.id);
      const std::size_t cols = gl.cols();
      for (std::size_t r = 0; r < saved.size(); ++r) {
        if (saved[r] >= 0) gl[r * cols + saved[r]] -= g * inv;
      }
    };
  }
  return result;
}

template <typename T>
Var Graph<T>::standardize(Var x, std::span<const std::uint8_t> mask, T std_floor) {
  const auto& xv = value(x);
  const std::size_t n = xv.size();
  if (!mask.empty() && mask.size() != n) {
    throw ShapeError("standardize: mask of " + std::to_string(mask.size()) + " for " + describe(x));
  }
  auto counted = [&mask](std::size_t i) { return mask.empty() || mask[i] != 0; };
  std::size_t count = 0;
  T mu{0};
  for (std::size_t i = 0; i < n; ++i) {
    if (counted(i)) {
      mu += xv[i];
      ++count;
    }
  }
  if (count == 0) throw ShapeError("standardize: no unmasked positions");
  mu /= static_cast<T>(count);
  T var{0};
  for (std::size_t i = 0; i < n; ++i) {
    if (counted(i)) var += (xv[i] - mu) * (xv[i] - mu);
  }
  var /= static_cast<T>(count);
  const T raw_std = std::sqrt(var);
  const bool floored = raw_std < std_floor;
  const T sigma = floored ? std_floor : raw_std;
  Tensor<T> out = Tensor<T>::zeros_like(xv);
  for (std::size_t i = 0; i < n; ++i) {
    if (counted(i)) out[i] = (xv[i] - mu) / sigma;
  }
  const bool needs = any_grad({x});
  Var result = push("standardize", std::move(out), needs);
  if (needs) {
    std::vector<std::uint8_t> saved(mask.begin(), mask.end());
    node(result).backward = [this, result, x, sigma, floored, count, saved = std::move(saved)] {
      const auto& g = nodes_[result.id].grad;
      const auto& z = nodes_[result.id].value;
      auto& gx = grad_buffer(x.id);
      auto counted = [&saved](std::size_t i) { return saved.empty() || saved[i] != 0; };
      T mean_g{0};
      T mean_gz{0};
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!counted(i)) continue;
        mean_g += g[i];
        mean_gz += g[i] * z[i];
      }
      mean_g /= static_cast<T>(count);
      mean_gz /= static_cast<T>(count);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!counted(i)) continue;
        // With the floor active sigma is a constant and only the mean moves.
        const T centered = g[i] - mean_g - (floored ? T{0} : z[i] * mean_gz);
        gx[i] += centered / sigma;
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Backward

template <typename T>
void Graph<T>::backward(Var loss) {
  if (nodes_.empty()) throw GraphError("backward: graph has no forward evaluation");
  if (!loss.valid() || loss.id >= nodes_.size()) throw GraphError("backward: loss is not a node of this graph");
  if (backward_done_) throw GraphError("backward: already run on this graph");
  auto& ln = nodes_[loss.id];
  if (ln.value.size() != 1) throw GraphError("backward: loss must be a scalar, got " + describe(loss));
  backward_done_ = true;
  if (!ln.needs_grad) return;
  grad_buffer(loss.id)[0] = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward();
  }
  for (auto& n : nodes_) {
    if (!n.param || !n.param->trainable || n.grad.empty()) continue;
    auto& pg = n.param->grad;
    if (pg.size() != n.grad.size()) pg = Tensor<T>::zeros_like(n.param->value);
    pg += n.grad;
  }
}

template <typename T>
Tensor<T> Graph<T>::grad(Var v) const {
  const auto& n = node(v);
  return n.grad.empty() ? Tensor<T>::zeros_like(n.value) : n.grad;
}

template <typename T>
std::map<std::string, Tensor<T>> backward_grads(Graph<T>& graph, Var loss, ParameterSet<T>& params) {
  params.zero_grad();
  graph.backward(loss);
  return params.gradients();
}

template class Graph<float>;
template class Graph<double>;
template std::map<std::string, Tensor<float>> backward_grads(Graph<float>&, Var, ParameterSet<float>&);
template std::map<std::string, Tensor<double>> backward_grads(Graph<double>&, Var, ParameterSet<double>&);

}  // namespace fgrnn::ad
