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

#include <cstdint>
#include <optional>

#include "avtsl/dataset.hpp"
#include "avtsl/fusion.hpp"
#include "avtsl/predictors.hpp"

namespace avtsl {

struct ModelConfig
{
  Index visual_dim = 0;
  Index audio_dim = 0;
  Index text_dim = 0;
  Index hidden_dim = 32;
  Index heads = 2;
  Index conv_width = 1;
  bool use_audio = true;
  std::uint64_t seed = 0;

  void validate() const
  {
    if (visual_dim < 1 || text_dim < 1 || (use_audio && audio_dim < 1))
      throw ConfigError("model: input dims must be positive");
    if (hidden_dim < 1) throw ConfigError("model: hidden dim must be positive");
    if (heads < 1 || hidden_dim % heads != 0)
      throw ConfigError("model: hidden dim " + std::to_string(hidden_dim) + " not divisible by " +
                        std::to_string(heads) + " heads");
    if (conv_width < 1 || conv_width % 2 == 0) throw ConfigError("model: conv width must be odd");
  }
};

// One question's inputs, audio already resampled onto the visual grid.
template <typename Scalar>
struct ModelInput
{
  Matrix<Scalar> visual; // V_n x visual_dim
  Matrix<Scalar> audio;  // V_n x audio_dim, empty without audio
  Matrix<Scalar> text;   // T_n x text_dim
};

template <typename Scalar>
ModelInput<Scalar> make_input(const VideoSample& video, const QAInstance& qa, bool use_audio)
{
  ModelInput<Scalar> in;
  in.visual = video.visual.values.cast<Scalar>();
  if (use_audio) in.audio = resample_audio_to_video_grid(video.audio, video.visual.length()).values.cast<Scalar>();
  in.text = qa.textual.values.cast<Scalar>();
  return in;
}

template <typename Scalar>
struct PredictorLogits
{
  std::optional<SpanLogits<Scalar>> av; // absent without audio
  SpanLogits<Scalar> v;
  SpanLogits<Scalar> t;
};

template <typename Scalar>
struct ModelOutput
{
  FusedFeatures<Scalar> fused;
  PredictorLogits<Scalar> logits;
};

template <typename Scalar>
class AvtslModel
{
public:
  explicit AvtslModel(const ModelConfig& config) : config_(config)
  {
    config_.validate();
    const Index d = config_.hidden_dim;
    Initializer init(config_.seed);
    auto& s = store_;
    proj_.visual = make_linear(s, init, "proj.visual", config_.visual_dim, d);
    if (config_.use_audio) proj_.audio = make_linear(s, init, "proj.audio", config_.audio_dim, d);
    proj_.text = make_linear(s, init, "proj.text", config_.text_dim, d);
    cqa_visual_ = make_cqa(s, init, "cqa.visual", d, config_.conv_width);
    if (config_.use_audio) cqa_audio_ = make_cqa(s, init, "cqa.audio", d, config_.conv_width);
    tri_ = make_tri_modal(s, init, "tri", d, config_.heads, config_.use_audio);
    if (config_.use_audio) head_av_ = make_recurrent_head(s, init, "head.av", d);
    head_v_ = make_recurrent_head(s, init, "head.v", d);
    head_t_ = make_token_head(s, init, "head.t", d);
  }

  AvtslModel(const AvtslModel&) = delete;
  AvtslModel& operator=(const AvtslModel&) = delete;

  ModelOutput<Scalar> forward(Tape<Scalar>& tape, const ModelInput<Scalar>& in)
  {
    if (in.visual.rows() < 1 || in.text.rows() < 1) throw DimensionError("model: empty visual or text sequence");
    if (config_.use_audio && in.audio.rows() != in.visual.rows())
      throw DimensionError("model: audio " + shape_string(in.audio) + " is not on the visual grid " +
                           shape_string(in.visual));

    Tensor<Scalar> audio;
    if (config_.use_audio) audio = tape.constant(in.audio);
    auto p = project_inputs(tape.constant(in.visual), audio, tape.constant(in.text), proj_);

    auto f_v2 = cqa_interact(p.visual, p.text, cqa_visual_);
    Tensor<Scalar> f_a2;
    if (config_.use_audio) f_a2 = cqa_interact(p.audio, p.text, cqa_audio_);

    ModelOutput<Scalar> out;
    out.fused = tri_modal_fuse(f_v2, f_a2, p.text, tri_);
    if (config_.use_audio) out.logits.av = av_predict(out.fused.f_av, head_av_);
    out.logits.v = v_predict(out.fused.f_v, head_v_);
    out.logits.t = t_predict(out.fused.t_hat, head_t_);
    return out;
  }

  const ModelConfig& config() const { return config_; }
  ParameterStore<Scalar>& parameters() { return store_; }
  const ParameterStore<Scalar>& parameters() const { return store_; }

private:
  ModelConfig config_;
  ParameterStore<Scalar> store_;
  InputProjection<Scalar> proj_;
  CqaParams<Scalar> cqa_visual_;
  CqaParams<Scalar> cqa_audio_;
  TriModalParams<Scalar> tri_;
  RecurrentSpanHead<Scalar> head_av_;
  RecurrentSpanHead<Scalar> head_v_;
  TokenSpanHead<Scalar> head_t_;
};

} // namespace avtsl
