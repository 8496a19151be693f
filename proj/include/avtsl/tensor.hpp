/*
 * Copyright 2026 The AVTSL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "avtsl/errors.hpp"

namespace avtsl {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(Index rows, Index cols)
{
  std::ostringstream os;
  os << "[" << rows << "x" << cols << "]";
  return os.str();
}

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m)
{
  return shape_string(m.rows(), m.cols());
}

///////////////////////////////////////////
// Parameters
///////////////////////////////////////////

// A named trainable tensor. The logical shape may have more than two axes
// (conv kernels are k x c_in x c_out); storage is always a row-major matrix
// whose last axis is the column axis.
template <typename Scalar>
struct Parameter
{
  std::string name;
  std::vector<Index> shape;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

inline bool valid_parameter_name(std::string_view name)
{
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
           (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '/' || c == '-';
  });
}

// Owns every Parameter of a model. Addresses are stable for the lifetime of
// the store, so tapes and optimizers may hold raw pointers.
template <typename Scalar>
class ParameterStore
{
public:
  Parameter<Scalar>& add(std::string name, std::vector<Index> shape)
  {
    if (!valid_parameter_name(name))
      throw ConfigError("invalid parameter name '" + name + "'");
    if (index_.count(name))
      throw ConfigError("duplicate parameter name '" + name + "'");
    if (shape.empty() || std::any_of(shape.begin(), shape.end(), [](Index d) { return d < 1; }))
      throw ConfigError("parameter '" + name + "' has a non-positive dimension");

    Index cols = shape.back();
    Index rows = std::accumulate(shape.begin(), shape.end() - 1, Index{1}, std::multiplies<>());

    auto p = std::make_unique<Parameter<Scalar>>();
    p->name = std::move(name);
    p->shape = std::move(shape);
    p->value.setZero(rows, cols);
    p->grad.setZero(rows, cols);
    index_.emplace(p->name, params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<Scalar>* find(std::string_view name)
  {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  const Parameter<Scalar>* find(std::string_view name) const
  {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  Parameter<Scalar>& at(std::size_t i) { return *params_[i]; }
  const Parameter<Scalar>& at(std::size_t i) const { return *params_[i]; }
  std::size_t size() const { return params_.size(); }

  Index scalar_count() const
  {
    Index n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grad()
  {
    for (auto& p : params_) p->zero_grad();
  }

private:
  std::vector<std::unique_ptr<Parameter<Scalar>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

///////////////////////////////////////////
// Tape
///////////////////////////////////////////

template <typename Scalar>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// lives.
template <typename Scalar>
class Tensor
{
public:
  Tensor() = default;
  Tensor(Tape<Scalar>* tape, Index id) : tape_(tape), id_(id) {}

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  const Matrix<Scalar>& grad() const { return tape_->grad(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Index size() const { return value().size(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

  Scalar item() const
  {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(value()));
    return value()(0, 0);
  }

  Tape<Scalar>& tape() const { return *tape_; }
  Index id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

private:
  Tape<Scalar>* tape_ = nullptr;
  Index id_ = -1;
};

// Ordered record of executed differentiable operations. Backward replays the
// record in reverse; each node is visited once.
template <typename Scalar>
class Tape
{
public:
  using Mat = Matrix<Scalar>;
  using BackwardFn = std::function<void(const Mat& upstream, Tape& tape)>;

  Tape() = default;
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<Scalar> constant(Mat value) { return leaf(std::move(value), false); }

  Tensor<Scalar> leaf(Mat value, bool requires_grad)
  {
    return record("leaf", std::move(value), requires_grad, nullptr);
  }

  Tensor<Scalar> parameter(Parameter<Scalar>& p)
  {
    Node node;
    node.op = "parameter";
    node.requires_grad = grad_enabled_;
    node.param = &p;
    nodes_.push_back(std::move(node));
    return Tensor<Scalar>(this, static_cast<Index>(nodes_.size()) - 1);
  }

  // Appends an op output. Non-finite values are rejected at the point they
  // are produced.
  Tensor<Scalar> record(const char* op, Mat value, bool requires_grad, BackwardFn fn)
  {
    if (!value.allFinite())
      throw NumericError(std::string("non-finite value produced by ") + op);
    Node node;
    node.op = op;
    node.value = std::move(value);
    node.requires_grad = requires_grad && grad_enabled_;
    if (node.requires_grad) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Tensor<Scalar>(this, static_cast<Index>(nodes_.size()) - 1);
  }

  const Mat& value(Index id) const
  {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }

  const Mat& grad(Index id) const { return nodes_[id].grad; }
  bool requires_grad(Index id) const { return nodes_[id].requires_grad; }
  const char* op(Index id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  bool grad_enabled() const { return grad_enabled_; }

  // Adds g into the gradient of t. No-op for values that carry no gradient.
  template <typename Derived>
  void accumulate(const Tensor<Scalar>& t, const Eigen::MatrixBase<Derived>& g)
  {
    Node& n = nodes_[t.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  // Reverse pass from a scalar. Parameter gradients accumulate (+=) across
  // calls; intermediate gradients are recomputed from scratch.
  void backward(const Tensor<Scalar>& loss)
  {
    if (nodes_.empty()) throw ContractError("backward on an empty tape");
    if (&loss.tape() != this) throw ContractError("backward on a tensor from another tape");
    if (loss.size() != 1)
      throw ContractError("backward requires a scalar loss, got " + shape_string(loss.value()));

    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad = Mat::Ones(1, 1);

    for (Index i = loss.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.param) {
        if (n.param->grad.size() == 0) n.param->zero_grad();
        n.param->grad += n.grad;
      }
      else if (n.backward) {
        n.backward(n.grad, *this);
      }
    }
  }

private:
  struct Node
  {
    const char* op = "";
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Parameter<Scalar>* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

namespace detail {

template <typename Scalar>
void same_tape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op)
{
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands live on different tapes");
}

// Result extent of a broadcast along one axis, or -1 when incompatible.
inline Index broadcast_extent(Index a, Index b)
{
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  return -1;
}

template <typename Scalar>
Matrix<Scalar> expand(const Matrix<Scalar>& m, Index rows, Index cols)
{
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sums a broadcast gradient back down to the operand's shape.
template <typename Scalar>
Matrix<Scalar> reduce_to(const Matrix<Scalar>& g, Index rows, Index cols)
{
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix<Scalar>::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

} // namespace detail

///////////////////////////////////////////
// Elementary ops
///////////////////////////////////////////

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
  detail::same_tape(a, b, "matmul");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.value()) + " x " +
                         shape_string(b.value()));
  auto& tape = a.tape();
  Matrix<Scalar> out = a.value() * b.value();
  return tape.record("matmul", std::move(out), a.requires_grad() || b.requires_grad(),
    [a, b](const Matrix<Scalar>& g, Tape<Scalar>& t) {
      if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
      if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
    });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a)
{
  Matrix<Scalar> out = a.value().transpose();
  return a.tape().record("transpose", std::move(out), a.requires_grad(),
    [a](const Matrix<Scalar>& g, Tape<Scalar>& t) { t.accumulate(a, g.transpose()); });
}

namespace detail {

template <typename Scalar, typename Forward, typename GradA, typename GradB>
Tensor<Scalar> broadcast_binary(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                                Forward forward, GradA grad_a, GradB grad_b)
{
  same_tape(a, b, op);
  Index rows = broadcast_extent(a.rows(), b.rows());
  Index cols = broadcast_extent(a.cols(), b.cols());
  if (rows < 0 || cols < 0)
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(a.value()) + " with " +
                         shape_string(b.value()));
  Matrix<Scalar> out = forward(expand(a.value(), rows, cols), expand(b.value(), rows, cols));
  return a.tape().record(op, std::move(out), a.requires_grad() || b.requires_grad(),
    [a, b, rows, cols, grad_a, grad_b](const Matrix<Scalar>& g, Tape<Scalar>& t) {
      if (a.requires_grad()) {
        Matrix<Scalar> ga = grad_a(g, expand(a.value(), rows, cols), expand(b.value(), rows, cols));
        t.accumulate(a, reduce_to(ga, a.rows(), a.cols()));
      }
      if (b.requires_grad()) {
        Matrix<Scalar> gb = grad_b(g, expand(a.value(), rows, cols), expand(b.value(), rows, cols));
        t.accumulate(b, reduce_to(gb, b.rows(), b.cols()));
      }
    });
}

} // namespace detail

// Elementwise sum with row/column broadcasting of size-1 axes.
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
  using M = Matrix<Scalar>;
  return detail::broadcast_binary<Scalar>("add", a, b,
    [](const M& x, const M& y) -> M { return x + y; },
    [](const M& g, const M&, const M&) -> M { return g; },
    [](const M& g, const M&, const M&) -> M { return g; });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
  using M = Matrix<Scalar>;
  return detail::broadcast_binary<Scalar>("sub", a, b,
    [](const M& x, const M& y) -> M { return x - y; },
    [](const M& g, const M&, const M&) -> M { return g; },
    [](const M& g, const M&, const M&) -> M { return -g; });
}

// Hadamard product with broadcasting.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
  using M = Matrix<Scalar>;
  return detail::broadcast_binary<Scalar>("mul", a, b,
    [](const M& x, const M& y) -> M { return x.cwiseProduct(y); },
    [](const M& g, const M&, const M& y) -> M { return g.cwiseProduct(y); },
    [](const M& g, const M& x, const M&) -> M { return g.cwiseProduct(x); });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s)
{
  Matrix<Scalar> out = a.value() * s;
  return a.tape().record("scale", std::move(out), a.requires_grad(),
    [a, s](const Matrix<Scalar>& g, Tape<Scalar>& t) { t.accumulate(a, g * s); });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a)
{
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape().record("relu", std::move(out), a.requires_grad(),
    [a](const Matrix<Scalar>& g, Tape<Scalar>& t) {
      t.accumulate(a, (a.value().array() > Scalar(0)).select(g, Scalar(0)));
    });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a)
{
  Matrix<Scalar> out = (Scalar(1) + (-a.value().array()).exp()).inverse().matrix();
  Index id = a.tape().size();
  return a.tape().record("sigmoid", std::move(out), a.requires_grad(),
    [a, id](const Matrix<Scalar>& g, Tape<Scalar>& t) {
      const auto& y = t.value(id).array();
      t.accumulate(a, (g.array() * y * (Scalar(1) - y)).matrix());
    });
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& a)
{
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  Index id = a.tape().size();
  return a.tape().record("tanh", std::move(out), a.requires_grad(),
    [a, id](const Matrix<Scalar>& g, Tape<Scalar>& t) {
      const auto& y = t.value(id).array();
      t.accumulate(a, (g.array() * (Scalar(1) - y.square())).matrix());
    });
}

// Sum of all elements, as a 1x1 tensor.
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a)
{
  Matrix<Scalar> out = Matrix<Scalar>::Constant(1, 1, a.value().sum());
  return a.tape().record("sum", std::move(out), a.requires_grad(),
    [a](const Matrix<Scalar>& g, Tape<Scalar>& t) {
      t.accumulate(a, Matrix<Scalar>::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

// Value copy with no gradient path (stop-gradient).
template <typename Scalar>
Tensor<Scalar> detach(const Tensor<Scalar>& a)
{
  return a.tape().constant(a.value());
}

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Index start, Index count)
{
  if (start < 0 || count < 1 || start + count > a.rows())
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of " + shape_string(a.value()));
  Matrix<Scalar> out = a.value().middleRows(start, count);
  return a.tape().record("slice_rows", std::move(out), a.requires_grad(),
    [a, start, count](const Matrix<Scalar>& g, Tape<Scalar>& t) {
      Matrix<Scalar> full = Matrix<Scalar>::Zero(a.rows(), a.cols());
      full.middleRows(start, count) = g;
      t.accumulate(a, full);
    });
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& a, Index start, Index count)
{
  if (start < 0 || count < 1 || start + count > a.cols())
    throw DimensionError("slice_cols: cols [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of " + shape_string(a.value()));
  Matrix<Scalar> out = a.value().middleCols(start, count);
  return a.tape().record("slice_cols", std::move(out), a.requires_grad(),
    [a, start, count](const Matrix<Scalar>& g, Tape<Scalar>& t) {
      Matrix<Scalar> full = Matrix<Scalar>::Zero(a.rows(), a.cols());
      full.middleCols(start, count) = g;
      t.accumulate(a, full);
    });
}

// Feature-axis concatenation of equally long sequences.
template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts)
{
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  Index rows = parts[0].rows();
  Index cols = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    if (p.rows() != rows)
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts[0].value()) + " vs " +
                           shape_string(p.value()));
    cols += p.cols();
    needs_grad = needs_grad || p.requires_grad();
  }
  Matrix<Scalar> out(rows, cols);
  Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts[0].tape().record("concat_cols", std::move(out), needs_grad,
    [parts](const Matrix<Scalar>& g, Tape<Scalar>& t) {
      Index c = 0;
      for (const auto& p : parts) {
        t.accumulate(p, g.middleCols(c, p.cols()));
        c += p.cols();
      }
    });
}

// Sequence-axis concatenation.
template <typename Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts)
{
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  Index cols = parts[0].cols();
  Index rows = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    if (p.cols() != cols)
      throw DimensionError("concat_rows: column mismatch " + shape_string(parts[0].value()) + " vs " +
                           shape_string(p.value()));
    rows += p.rows();
    needs_grad = needs_grad || p.requires_grad();
  }
  Matrix<Scalar> out(rows, cols);
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return parts[0].tape().record("concat_rows", std::move(out), needs_grad,
    [parts](const Matrix<Scalar>& g, Tape<Scalar>& t) {
      Index r = 0;
      for (const auto& p : parts) {
        t.accumulate(p, g.middleRows(r, p.rows()));
        r += p.rows();
      }
    });
}

} // namespace avtsl
