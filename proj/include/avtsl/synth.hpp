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
#include <string>

#include "avtsl/dataset.hpp"

namespace avtsl {

// Synthetic desk-scale data with a planted answer span per question.
//
// Every modality is a mixture of fixed random projections of a low-rank
// latent space. Each position carries a per-video background pattern; inside
// the answer span the visual, audio and subtitle-token features additionally
// carry (marker + question) latent, and the question tokens carry the
// question latent alone. Each text feature also mixes in the content of its
// neighbouring tokens, standing in for the contextual text encoder that
// produces real features. Subtitle slots cover whole grid cells and answers
// begin and end on slot boundaries. Projections come from `pattern_seed` so
// splits generated with different `seed`s share the same feature "world".
struct SynthConfig
{
  int n_videos = 8;
  int questions_per_video = 1;
  int min_video_len = 24; // V_n range, inclusive
  int max_video_len = 40;
  int min_text_len = 20; // T_n range (question + subtitle tokens), inclusive
  int max_text_len = 32;
  int question_len = 4;
  int visual_dim = 24;
  int audio_dim = 16;
  int text_dim = 32;
  int latent_rank = 4;
  double time_step_seconds = 0.5;
  double audio_length_ratio = 0.75; // A_n / V_n
  double min_answer_fraction = 0.15;
  double max_answer_fraction = 0.4;
  double answer_signal_strength = 1.0;
  // Per-modality multipliers of the planted signal.
  double visual_gain = 0.5;
  double audio_gain = 0.8;
  double text_gain = 1.0;
  double background_strength = 0.5;
  double text_context = 0.5; // weight of neighbouring-token content
  double noise_sigma = 0.1;
  double gap_fraction = 0.0; // share of the timeline without subtitles
  std::uint64_t seed = 0;
  std::uint64_t pattern_seed = 7;
  Split split = Split::Train;
  std::string id_prefix = "syn";

  void validate() const;
};

Dataset synth_generate(const SynthConfig& config);

} // namespace avtsl
