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

namespace avtsl {

///////////////////////////////////////////
// Input projection
///////////////////////////////////////////

template <typename Scalar>
struct InputProjection
{
  Linear<Scalar> visual;
  Linear<Scalar> audio; // unset when the model runs without audio
  Linear<Scalar> text;
};

template <typename Scalar>
struct ProjectedInputs
{
  Tensor<Scalar> visual;
  Tensor<Scalar> audio; // invalid() without audio
  Tensor<Scalar> text;
};

// Learned per-modality linear maps into the shared hidden dim.
template <typename Scalar>
ProjectedInputs<Scalar> project_inputs(const Tensor<Scalar>& visual, const Tensor<Scalar>& audio,
                                       const Tensor<Scalar>& text, const InputProjection<Scalar>& proj)
{
  ProjectedInputs<Scalar> out;
  out.visual = linear(visual, proj.visual);
  if (audio.valid()) {
    if (!proj.audio.weight) throw ConfigError("project_inputs: audio given to a model built without audio");
    out.audio = linear(audio, proj.audio);
  }
  out.text = linear(text, proj.text);
  return out;
}

///////////////////////////////////////////
// Context-query attention interactor
///////////////////////////////////////////

template <typename Scalar>
struct CqaParams
{
  // Trilinear similarity weights, 3d x 1: rows [0,d) score the context
  // vector, [d,2d) the query vector, [2d,3d) their elementwise product.
  Parameter<Scalar>* similarity = nullptr;
  FeedForward<Scalar> ffn; // 4d -> 2d -> d
  Parameter<Scalar>* attn_query = nullptr;
  Parameter<Scalar>* attn_key = nullptr;
  Parameter<Scalar>* attn_value = nullptr;
  Parameter<Scalar>* conv_kernel = nullptr; // k x 2d x d
  Index conv_width = 1;

  Index dim() const { return attn_query->value.rows(); }
};

template <typename Scalar>
CqaParams<Scalar> make_cqa(ParameterStore<Scalar>& store, Initializer& init, const std::string& name, Index d,
                           Index conv_width = 1)
{
  if (conv_width < 1 || conv_width % 2 == 0)
    throw ConfigError("cqa '" + name + "': conv width must be odd, got " + std::to_string(conv_width));
  CqaParams<Scalar> p;
  p.similarity = &store.add(name + ".similarity", {3 * d, 1});
  init.uniform(*p.similarity, 3 * d);
  p.ffn = make_feed_forward(store, init, name + ".ffn", 4 * d, 2 * d, d);
  p.attn_query = &store.add(name + ".attn.w_query", {d, d});
  p.attn_key = &store.add(name + ".attn.w_key", {d, d});
  p.attn_value = &store.add(name + ".attn.w_value", {d, d});
  for (auto* w : {p.attn_query, p.attn_key, p.attn_value}) init.uniform(*w, d);
  p.conv_kernel = &store.add(name + ".conv.kernel", {conv_width, 2 * d, d});
  init.uniform(*p.conv_kernel, conv_width * 2 * d);
  p.conv_width = conv_width;
  return p;
}

// Intermediate values of one interactor pass, for inspection.
template <typename Scalar>
struct CqaTrace
{
  Matrix<Scalar> similarity; // L_m x T_n
  Matrix<Scalar> row_norm;   // softmax over each row
  Matrix<Scalar> col_norm;   // softmax over each column
  Matrix<Scalar> context_to_query;
  Matrix<Scalar> query_to_context;
  Matrix<Scalar> text_attention; // L_m x T_n weights of the concatenation attention
  Matrix<Scalar> text_context;   // attended text per modality position
};

// Bidirectional attention between a modality sequence (context, L_m x d)
// and the text (query, T_n x d), fused by the 4d -> d feed-forward network.
template <typename Scalar>
Tensor<Scalar> cqa_forward(const Tensor<Scalar>& context, const Tensor<Scalar>& query, const CqaParams<Scalar>& p,
                           CqaTrace<Scalar>* trace = nullptr)
{
  auto& tape = context.tape();
  const Index d = p.dim();
  if (context.rows() < 1 || query.rows() < 1) throw DimensionError("cqa_forward: empty sequence");
  if (context.cols() != d || query.cols() != d)
    throw DimensionError("cqa_forward: expected dim " + std::to_string(d) + ", got context " +
                         shape_string(context.value()) + " and query " + shape_string(query.value()));

  auto w = tape.parameter(*p.similarity);
  auto w_context = slice_rows(w, 0, d);
  auto w_query = slice_rows(w, d, d);
  auto w_product = transpose(slice_rows(w, 2 * d, d)); // 1 x d

  // S_ij = w_c . c_i + w_q . q_j + w_m . (c_i * q_j)
  auto s = add(add(matmul(context, w_context), transpose(matmul(query, w_query))),
               matmul(mul(context, w_product), transpose(query)));
  auto s_row = softmax(s, Axis::Row);
  auto s_col = softmax(s, Axis::Col);

  auto c2q = matmul(s_row, query);
  auto q2c = matmul(matmul(s_col, transpose(s_row)), context);

  if (trace) {
    trace->similarity = s.value();
    trace->row_norm = s_row.value();
    trace->col_norm = s_col.value();
    trace->context_to_query = c2q.value();
    trace->query_to_context = q2c.value();
  }
  return feed_forward(concat_cols<Scalar>({context, c2q, mul(context, c2q), mul(context, q2c)}), p.ffn);
}

// Aligns the text to every modality position with single-head scaled
// dot-product attention (queries from f_prime), concatenates the residual
// attention output with the attended text along the feature axis, and
// projects 2d -> d with the convolution. The result stays on the modality grid.
template <typename Scalar>
Tensor<Scalar> context_query_concat(const Tensor<Scalar>& f_prime, const Tensor<Scalar>& text,
                                    const CqaParams<Scalar>& p, CqaTrace<Scalar>* trace = nullptr)
{
  auto& tape = f_prime.tape();
  const Index d = p.dim();
  if (f_prime.cols() != d || text.cols() != d)
    throw DimensionError("context_query_concat: expected dim " + std::to_string(d) + ", got " +
                         shape_string(f_prime.value()) + " and " + shape_string(text.value()));

  Matrix<Scalar> weights;
  auto q = matmul(f_prime, tape.parameter(*p.attn_query));
  auto k = matmul(text, tape.parameter(*p.attn_key));
  auto text_context = attend(q, k, text, trace ? &weights : nullptr);
  auto attn_out = add(f_prime, matmul(text_context, tape.parameter(*p.attn_value)));

  if (trace) {
    trace->text_attention = weights;
    trace->text_context = text_context.value();
  }
  return conv1d(concat_cols<Scalar>({attn_out, text_context}), tape.parameter(*p.conv_kernel), p.conv_width);
}

// Full textual-visual/audio interactor: F'' = concat-module(CQA(F, T), T).
template <typename Scalar>
Tensor<Scalar> cqa_interact(const Tensor<Scalar>& context, const Tensor<Scalar>& text, const CqaParams<Scalar>& p)
{
  return context_query_concat(cqa_forward(context, text, p), text, p);
}

///////////////////////////////////////////
// Audio-visual-textual interaction
///////////////////////////////////////////

template <typename Scalar>
struct TriModalParams
{
  MultiHeadAttention<Scalar> text_to_visual;  // q = T, k = v = F^V''
  MultiHeadAttention<Scalar> text_to_audio;   // q = T, k = v = F^A''
  MultiHeadAttention<Scalar> visual_to_text;  // q = F^V'', k = v = T'
  MultiHeadAttention<Scalar> audio_to_text;   // q = F^A'', k = v = T'
  bool use_audio = true;
};

template <typename Scalar>
TriModalParams<Scalar> make_tri_modal(ParameterStore<Scalar>& store, Initializer& init, const std::string& name,
                                      Index d, Index heads, bool use_audio)
{
  TriModalParams<Scalar> p;
  p.use_audio = use_audio;
  p.text_to_visual = make_attention(store, init, name + ".text_to_visual", d, heads);
  if (use_audio) p.text_to_audio = make_attention(store, init, name + ".text_to_audio", d, heads);
  p.visual_to_text = make_attention(store, init, name + ".visual_to_text", d, heads);
  if (use_audio) p.audio_to_text = make_attention(store, init, name + ".audio_to_text", d, heads);
  return p;
}

template <typename Scalar>
struct FusedFeatures
{
  Tensor<Scalar> f_av;   // audio-enhanced visual, V_n x d
  Tensor<Scalar> f_v;    // visual-textual F^V'', V_n x d
  Tensor<Scalar> t_hat;  // text with the pooled F^AV broadcast in, T_n x d
  Tensor<Scalar> t_prime;
  Tensor<Scalar> pooled; // 1 x d
};

// Without audio, f_a2 is invalid and the audio branches drop out: T' = F^T1 + T
// and F^AV degenerates to F^V'''.
template <typename Scalar>
FusedFeatures<Scalar> tri_modal_fuse(const Tensor<Scalar>& f_v2, const Tensor<Scalar>& f_a2,
                                     const Tensor<Scalar>& text, const TriModalParams<Scalar>& p)
{
  const bool with_audio = p.use_audio && f_a2.valid();
  if (p.use_audio != f_a2.valid())
    throw ConfigError("tri_modal_fuse: audio features and audio parameters must be supplied together");
  if (with_audio && f_a2.rows() != f_v2.rows())
    throw DimensionError("tri_modal_fuse: audio must be on the visual grid, got " + shape_string(f_a2.value()) +
                         " vs " + shape_string(f_v2.value()));

  auto t_prime = add(multi_head_attention(text, f_v2, f_v2, p.text_to_visual), text);
  if (with_audio) t_prime = add(t_prime, multi_head_attention(text, f_a2, f_a2, p.text_to_audio));

  auto f_v3 = add(multi_head_attention(f_v2, t_prime, t_prime, p.visual_to_text), f_v2);
  Tensor<Scalar> f_av = f_v3;
  if (with_audio) {
    auto f_a3 = add(multi_head_attention(f_a2, t_prime, t_prime, p.audio_to_text), f_a2);
    f_av = add(f_v3, f_a3);
  }

  FusedFeatures<Scalar> out;
  out.f_av = f_av;
  out.f_v = f_v2;
  out.t_prime = t_prime;
  out.pooled = max_pool_seq(f_av);
  out.t_hat = add(text, out.pooled);
  return out;
}

} // namespace avtsl
