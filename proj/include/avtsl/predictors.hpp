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

#include "avtsl/nn.hpp"
#include "avtsl/span.hpp"

namespace avtsl {

// Start/end logits of one predictor, each L x 1.
template <typename Scalar>
struct SpanLogits
{
  SpanDomain domain = SpanDomain::VideoGrid;
  Tensor<Scalar> start;
  Tensor<Scalar> end;

  Index length() const { return start.rows(); }
};

// Decodes within [first, last] (last < 0: the whole sequence).
template <typename Scalar>
SpanPrediction decode_span(const SpanLogits<Scalar>& logits, Index first = 0, Index last = -1)
{
  return decode_span(logits.start.value(), logits.end.value(), logits.domain, first, last);
}

// Video-grid predictor: independent start and end LSTMs, each followed by a
// position-wise FFN d -> d -> 1.
template <typename Scalar>
struct RecurrentSpanHead
{
  Lstm<Scalar> start_lstm;
  Lstm<Scalar> end_lstm;
  FeedForward<Scalar> start_ffn;
  FeedForward<Scalar> end_ffn;
};

template <typename Scalar>
RecurrentSpanHead<Scalar> make_recurrent_head(ParameterStore<Scalar>& store, Initializer& init,
                                              const std::string& name, Index d)
{
  RecurrentSpanHead<Scalar> h;
  h.start_lstm = make_lstm(store, init, name + ".start_lstm", d, d);
  h.end_lstm = make_lstm(store, init, name + ".end_lstm", d, d);
  h.start_ffn = make_feed_forward(store, init, name + ".start_ffn", d, d, 1);
  h.end_ffn = make_feed_forward(store, init, name + ".end_ffn", d, d, 1);
  return h;
}

// Token predictor: two position-wise FFNs d -> d -> 1, no recurrence.
template <typename Scalar>
struct TokenSpanHead
{
  FeedForward<Scalar> start_ffn;
  FeedForward<Scalar> end_ffn;
};

template <typename Scalar>
TokenSpanHead<Scalar> make_token_head(ParameterStore<Scalar>& store, Initializer& init, const std::string& name,
                                      Index d)
{
  TokenSpanHead<Scalar> h;
  h.start_ffn = make_feed_forward(store, init, name + ".start_ffn", d, d, 1);
  h.end_ffn = make_feed_forward(store, init, name + ".end_ffn", d, d, 1);
  return h;
}

namespace detail {

template <typename Scalar>
SpanLogits<Scalar> recurrent_predict(const Tensor<Scalar>& features, const RecurrentSpanHead<Scalar>& head)
{
  if (features.cols() != head.start_lstm.input_size())
    throw DimensionError("span predictor: features " + shape_string(features.value()) + " do not match dim " +
                         std::to_string(head.start_lstm.input_size()));
  SpanLogits<Scalar> out;
  out.domain = SpanDomain::VideoGrid;
  out.start = feed_forward(lstm_forward(features, head.start_lstm), head.start_ffn);
  out.end = feed_forward(lstm_forward(features, head.end_lstm), head.end_ffn);
  return out;
}

} // namespace detail

// Audio-visual predictor over F^AV.
template <typename Scalar>
SpanLogits<Scalar> av_predict(const Tensor<Scalar>& f_av, const RecurrentSpanHead<Scalar>& head)
{
  return detail::recurrent_predict(f_av, head);
}

// Visual predictor over F^V''.
template <typename Scalar>
SpanLogits<Scalar> v_predict(const Tensor<Scalar>& f_v2, const RecurrentSpanHead<Scalar>& head)
{
  return detail::recurrent_predict(f_v2, head);
}

// Textual predictor over T-hat.
template <typename Scalar>
SpanLogits<Scalar> t_predict(const Tensor<Scalar>& t_hat, const TokenSpanHead<Scalar>& head)
{
  if (t_hat.cols() != head.start_ffn.hidden.in_features())
    throw DimensionError("t_predict: features " + shape_string(t_hat.value()) + " do not match dim " +
                         std::to_string(head.start_ffn.hidden.in_features()));
  SpanLogits<Scalar> out;
  out.domain = SpanDomain::Token;
  out.start = feed_forward(t_hat, head.start_ffn);
  out.end = feed_forward(t_hat, head.end_ffn);
  return out;
}

} // namespace avtsl
