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

#include <cmath>
#include <cstdint>
#include <random>

#include "avtsl/tensor.hpp"

namespace avtsl {

enum class Axis { Row, Col };

///////////////////////////////////////////
// Normalization and losses
///////////////////////////////////////////

// Softmax over each row (Axis::Row) or each column (Axis::Col), stabilized
// by subtracting the slice maximum.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Axis axis)
{
  using M = Matrix<Scalar>;
  const M& v = x.value();
  M out(v.rows(), v.cols());
  if (axis == Axis::Row) {
    for (Index r = 0; r < v.rows(); ++r) {
      auto e = (v.row(r).array() - v.row(r).maxCoeff()).exp();
      out.row(r) = (e / e.sum()).matrix();
    }
  }
  else {
    for (Index c = 0; c < v.cols(); ++c) {
      auto e = (v.col(c).array() - v.col(c).maxCoeff()).exp();
      out.col(c) = (e / e.sum()).matrix();
    }
  }
  Index id = x.tape().size();
  return x.tape().record("softmax", std::move(out), x.requires_grad(),
    [x, id, axis](const M& g, Tape<Scalar>& t) {
      const M& y = t.value(id);
      M gy = g.cwiseProduct(y);
      if (axis == Axis::Row)
        t.accumulate(x, gy - (y.array().colwise() * gy.rowwise().sum().array()).matrix());
      else
        t.accumulate(x, gy - (y.array().rowwise() * gy.colwise().sum().array()).matrix());
    });
}

namespace detail {

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> as_vector(const Matrix<Scalar>& m)
{
  return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(m.data(), m.size());
}

template <typename Scalar>
Scalar log_sum_exp(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v)
{
  Scalar m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

} // namespace detail

// -log softmax(logits)[target] for a logit vector (row or column shaped).
template <typename Scalar>
Tensor<Scalar> cross_entropy_index(const Tensor<Scalar>& logits, Index target)
{
  using M = Matrix<Scalar>;
  Index n = logits.size();
  if (n < 1) throw DimensionError("cross_entropy_index: empty logits");
  if (logits.rows() != 1 && logits.cols() != 1)
    throw DimensionError("cross_entropy_index: logits must be a vector, got " + shape_string(logits.value()));
  if (target < 0 || target >= n)
    throw IndexError("cross_entropy_index: target " + std::to_string(target) + " out of range [0, " +
                     std::to_string(n) + ")");
  auto v = detail::as_vector(logits.value());
  Scalar lse = detail::log_sum_exp(v);
  M out = M::Constant(1, 1, lse - v(target));
  return logits.tape().record("cross_entropy_index", std::move(out), logits.requires_grad(),
    [logits, target, lse](const M& g, Tape<Scalar>& t) {
      M p = (logits.value().array() - lse).exp().matrix();
      p.data()[target] -= Scalar(1);
      t.accumulate(logits, p * g(0, 0));
    });
}

// -sum_i target[i] * log softmax(logits)[i]. The target is a constant.
template <typename Scalar, typename Derived>
Tensor<Scalar> soft_cross_entropy(const Tensor<Scalar>& logits, const Eigen::MatrixBase<Derived>& target)
{
  using M = Matrix<Scalar>;
  Index n = logits.size();
  if (n < 1) throw DimensionError("soft_cross_entropy: empty logits");
  if (target.size() != n)
    throw DimensionError("soft_cross_entropy: target has " + std::to_string(target.size()) +
                         " entries, logits have " + std::to_string(n));
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> p(n);
  const auto dense = target.derived().eval();
  for (Index i = 0; i < n; ++i) p(i) = static_cast<Scalar>(dense.data()[i]);
  double mass = p.template cast<double>().sum();
  if (std::abs(mass - 1.0) > 1e-5 || (p.array() < Scalar(0)).any())
    throw ValidationError("soft_cross_entropy: target is not a probability vector (sum " + std::to_string(mass) + ")");

  auto v = detail::as_vector(logits.value());
  Scalar lse = detail::log_sum_exp(v);
  M out = M::Constant(1, 1, lse * p.sum() - p.dot(v));
  return logits.tape().record("soft_cross_entropy", std::move(out), logits.requires_grad(),
    [logits, p, lse](const M& g, Tape<Scalar>& t) {
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d =
        (detail::as_vector(logits.value()).array() - lse).exp().matrix() * p.sum() - p;
      t.accumulate(logits, Eigen::Map<const M>(d.data(), logits.rows(), logits.cols()) * g(0, 0));
    });
}

///////////////////////////////////////////
// Sequence ops
///////////////////////////////////////////

// Same-padded 1-D convolution along the sequence axis.
// x: L x c_in; kernel storage: (k * c_in) x c_out, tap j in rows [j*c_in, (j+1)*c_in).
template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel, Index k)
{
  using M = Matrix<Scalar>;
  detail::same_tape(x, kernel, "conv1d");
  if (k < 1 || k % 2 == 0) throw ConfigError("conv1d: kernel size must be odd, got " + std::to_string(k));
  Index len = x.rows();
  Index c_in = x.cols();
  if (kernel.rows() != k * c_in)
    throw DimensionError("conv1d: kernel " + shape_string(kernel.value()) + " does not match k=" +
                         std::to_string(k) + " and input " + shape_string(x.value()));
  Index c_out = kernel.cols();
  Index half = k / 2;

  M out = M::Zero(len, c_out);
  for (Index j = 0; j < k; ++j) {
    Index shift = j - half;
    Index lo = std::max<Index>(0, -shift);
    Index hi = std::min<Index>(len, len - shift);
    if (hi <= lo) continue;
    out.middleRows(lo, hi - lo).noalias() +=
      x.value().middleRows(lo + shift, hi - lo) * kernel.value().middleRows(j * c_in, c_in);
  }
  return x.tape().record("conv1d", std::move(out), x.requires_grad() || kernel.requires_grad(),
    [x, kernel, k, len, c_in, half](const M& g, Tape<Scalar>& t) {
      M gx = M::Zero(len, c_in);
      M gk = M::Zero(kernel.rows(), kernel.cols());
      for (Index j = 0; j < k; ++j) {
        Index shift = j - half;
        Index lo = std::max<Index>(0, -shift);
        Index hi = std::min<Index>(len, len - shift);
        if (hi <= lo) continue;
        gx.middleRows(lo + shift, hi - lo).noalias() +=
          g.middleRows(lo, hi - lo) * kernel.value().middleRows(j * c_in, c_in).transpose();
        gk.middleRows(j * c_in, c_in).noalias() +=
          x.value().middleRows(lo + shift, hi - lo).transpose() * g.middleRows(lo, hi - lo);
      }
      t.accumulate(x, gx);
      t.accumulate(kernel, gk);
    });
}

// Per-feature maximum over the sequence axis: L x d -> 1 x d. The subgradient
// goes to the first maximal position.
template <typename Scalar>
Tensor<Scalar> max_pool_seq(const Tensor<Scalar>& x)
{
  using M = Matrix<Scalar>;
  if (x.rows() < 1) throw DimensionError("max_pool_seq: empty sequence");
  const M& v = x.value();
  std::vector<Index> argmax(v.cols());
  M out(1, v.cols());
  for (Index c = 0; c < v.cols(); ++c) {
    Index best = 0;
    for (Index r = 1; r < v.rows(); ++r)
      if (v(r, c) > v(best, c)) best = r;
    argmax[c] = best;
    out(0, c) = v(best, c);
  }
  return x.tape().record("max_pool_seq", std::move(out), x.requires_grad(),
    [x, argmax](const M& g, Tape<Scalar>& t) {
      M gx = M::Zero(x.rows(), x.cols());
      for (Index c = 0; c < x.cols(); ++c) gx(argmax[c], c) = g(0, c);
      t.accumulate(x, gx);
    });
}

///////////////////////////////////////////
// Layers
///////////////////////////////////////////

// Deterministic parameter initializer; draws happen in parameter creation order.
class Initializer
{
public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  template <typename Scalar>
  void uniform(Parameter<Scalar>& p, Index fan_in)
  {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(dist(rng_));
  }

  template <typename Scalar>
  void zeros(Parameter<Scalar>& p)
  {
    p.value.setZero();
  }

private:
  std::mt19937_64 rng_;
};

template <typename Scalar>
struct Linear
{
  Parameter<Scalar>* weight = nullptr; // in x out
  Parameter<Scalar>* bias = nullptr;   // 1 x out, optional

  Index in_features() const { return weight->value.rows(); }
  Index out_features() const { return weight->value.cols(); }
};

template <typename Scalar>
Linear<Scalar> make_linear(ParameterStore<Scalar>& store, Initializer& init, const std::string& name, Index in,
                           Index out, bool with_bias = true)
{
  Linear<Scalar> layer;
  layer.weight = &store.add(name + ".weight", {in, out});
  init.uniform(*layer.weight, in);
  if (with_bias) {
    layer.bias = &store.add(name + ".bias", {1, out});
    init.zeros(*layer.bias);
  }
  return layer;
}

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Linear<Scalar>& layer)
{
  auto& tape = x.tape();
  if (x.cols() != layer.in_features())
    throw DimensionError("linear '" + layer.weight->name + "': input " + shape_string(x.value()) +
                         " does not match weight " + shape_string(layer.weight->value));
  auto y = matmul(x, tape.parameter(*layer.weight));
  if (layer.bias) y = add(y, tape.parameter(*layer.bias));
  return y;
}

// Two-layer position-wise feed-forward network with a ReLU hidden layer.
template <typename Scalar>
struct FeedForward
{
  Linear<Scalar> hidden;
  Linear<Scalar> output;
};

template <typename Scalar>
FeedForward<Scalar> make_feed_forward(ParameterStore<Scalar>& store, Initializer& init, const std::string& name,
                                      Index in, Index hidden, Index out)
{
  FeedForward<Scalar> ffn;
  ffn.hidden = make_linear(store, init, name + ".fc1", in, hidden);
  ffn.output = make_linear(store, init, name + ".fc2", hidden, out);
  return ffn;
}

template <typename Scalar>
Tensor<Scalar> feed_forward(const Tensor<Scalar>& x, const FeedForward<Scalar>& ffn)
{
  return linear(relu(linear(x, ffn.hidden)), ffn.output);
}

///////////////////////////////////////////
// LSTM
///////////////////////////////////////////

// Unidirectional LSTM. Gate column blocks are ordered input, forget, cell, output.
template <typename Scalar>
struct Lstm
{
  Parameter<Scalar>* w_input = nullptr;     // d x 4h
  Parameter<Scalar>* w_recurrent = nullptr; // h x 4h
  Parameter<Scalar>* bias = nullptr;        // 1 x 4h

  Index input_size() const { return w_input->value.rows(); }
  Index hidden_size() const { return w_recurrent->value.rows(); }
};

template <typename Scalar>
Lstm<Scalar> make_lstm(ParameterStore<Scalar>& store, Initializer& init, const std::string& name, Index in,
                       Index hidden)
{
  Lstm<Scalar> lstm;
  lstm.w_input = &store.add(name + ".w_input", {in, 4 * hidden});
  lstm.w_recurrent = &store.add(name + ".w_recurrent", {hidden, 4 * hidden});
  lstm.bias = &store.add(name + ".bias", {1, 4 * hidden});
  init.uniform(*lstm.w_input, in);
  init.uniform(*lstm.w_recurrent, hidden);
  init.zeros(*lstm.bias);
  lstm.bias->value.middleCols(hidden, hidden).setConstant(Scalar(1));
  return lstm;
}

// Hidden-state sequence of a forward-direction LSTM from a zero initial state.
template <typename Scalar>
Tensor<Scalar> lstm_forward(const Tensor<Scalar>& x, const Lstm<Scalar>& lstm)
{
  auto& tape = x.tape();
  Index len = x.rows();
  Index h = lstm.hidden_size();
  if (len < 1) throw DimensionError("lstm_forward: empty sequence");
  if (x.cols() != lstm.input_size())
    throw DimensionError("lstm_forward: input " + shape_string(x.value()) + " does not match w_input " +
                         shape_string(lstm.w_input->value));

  auto w_rec = tape.parameter(*lstm.w_recurrent);
  auto projected = add(matmul(x, tape.parameter(*lstm.w_input)), tape.parameter(*lstm.bias));

  Tensor<Scalar> hidden;
  Tensor<Scalar> cell;
  std::vector<Tensor<Scalar>> outputs;
  outputs.reserve(len);
  for (Index step = 0; step < len; ++step) {
    auto z = slice_rows(projected, step, 1);
    if (step > 0) z = add(z, matmul(hidden, w_rec));
    auto in_gate = sigmoid(slice_cols(z, 0, h));
    auto forget_gate = sigmoid(slice_cols(z, h, h));
    auto candidate = tanh(slice_cols(z, 2 * h, h));
    auto out_gate = sigmoid(slice_cols(z, 3 * h, h));
    cell = step > 0 ? add(mul(forget_gate, cell), mul(in_gate, candidate)) : mul(in_gate, candidate);
    hidden = mul(out_gate, tanh(cell));
    outputs.push_back(hidden);
  }
  return concat_rows(outputs);
}

///////////////////////////////////////////
// Attention
///////////////////////////////////////////

template <typename Scalar>
struct MultiHeadAttention
{
  Parameter<Scalar>* w_query = nullptr;
  Parameter<Scalar>* w_key = nullptr;
  Parameter<Scalar>* w_value = nullptr;
  Parameter<Scalar>* w_output = nullptr;
  Index heads = 1;

  Index dim() const { return w_query->value.rows(); }
};

template <typename Scalar>
MultiHeadAttention<Scalar> make_attention(ParameterStore<Scalar>& store, Initializer& init, const std::string& name,
                                          Index dim, Index heads)
{
  if (heads < 1 || dim % heads != 0)
    throw ConfigError("attention '" + name + "': dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  MultiHeadAttention<Scalar> mha;
  mha.heads = heads;
  mha.w_query = &store.add(name + ".w_query", {dim, dim});
  mha.w_key = &store.add(name + ".w_key", {dim, dim});
  mha.w_value = &store.add(name + ".w_value", {dim, dim});
  mha.w_output = &store.add(name + ".w_output", {dim, dim});
  for (auto* p : {mha.w_query, mha.w_key, mha.w_value, mha.w_output}) init.uniform(*p, dim);
  return mha;
}

// Scaled dot-product attention of one head; scale 1/sqrt(head dim).
template <typename Scalar>
Tensor<Scalar> attend(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v,
                      Matrix<Scalar>* weights = nullptr)
{
  Scalar s = Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
  auto w = softmax(scale(matmul(q, transpose(k)), s), Axis::Row);
  if (weights) *weights = w.value();
  return matmul(w, v);
}

// Per-head scaled dot-product attention, heads concatenated then projected.
// `weights`, when given, receives one L_q x L_k attention matrix per head.
template <typename Scalar>
Tensor<Scalar> multi_head_attention(const Tensor<Scalar>& query, const Tensor<Scalar>& key,
                                    const Tensor<Scalar>& value, const MultiHeadAttention<Scalar>& mha,
                                    std::vector<Matrix<Scalar>>* weights = nullptr)
{
  auto& tape = query.tape();
  Index d = mha.dim();
  if (mha.heads < 1 || d % mha.heads != 0)
    throw ConfigError("multi_head_attention: dim " + std::to_string(d) + " not divisible by " +
                      std::to_string(mha.heads) + " heads");
  if (query.cols() != d || key.cols() != d || value.cols() != d)
    throw DimensionError("multi_head_attention: expected feature dim " + std::to_string(d) + ", got q" +
                         shape_string(query.value()) + " k" + shape_string(key.value()) + " v" +
                         shape_string(value.value()));
  if (key.rows() != value.rows())
    throw DimensionError("multi_head_attention: key/value lengths differ");

  auto q = matmul(query, tape.parameter(*mha.w_query));
  auto k = matmul(key, tape.parameter(*mha.w_key));
  auto v = matmul(value, tape.parameter(*mha.w_value));

  Index dh = d / mha.heads;
  if (weights) weights->assign(mha.heads, Matrix<Scalar>());
  std::vector<Tensor<Scalar>> heads;
  heads.reserve(mha.heads);
  for (Index h = 0; h < mha.heads; ++h) {
    heads.push_back(attend(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh), slice_cols(v, h * dh, dh),
                           weights ? &(*weights)[h] : nullptr));
  }
  auto merged = mha.heads == 1 ? heads[0] : concat_cols(heads);
  return matmul(merged, tape.parameter(*mha.w_output));
}

} // namespace avtsl
