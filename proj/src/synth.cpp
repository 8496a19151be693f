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

#include "avtsl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace avtsl {

void SynthConfig::validate() const
{
  auto fail = [](const std::string& m) { throw ConfigError("synth: " + m); };
  if (n_videos < 0) fail("n_videos must be >= 0");
  if (questions_per_video < 1) fail("questions_per_video must be >= 1");
  if (min_video_len < 2 || max_video_len < min_video_len) fail("invalid video length range");
  if (question_len < 1) fail("question_len must be >= 1");
  if (min_text_len < question_len + 1 || max_text_len < min_text_len) fail("invalid text length range");
  if (visual_dim < 1 || audio_dim < 1 || text_dim < 1 || latent_rank < 1) fail("dims must be positive");
  if (!(time_step_seconds > 0.0)) fail("time step must be positive");
  if (!(audio_length_ratio > 0.0)) fail("audio length ratio must be positive");
  if (!(min_answer_fraction > 0.0) || max_answer_fraction < min_answer_fraction || max_answer_fraction > 1.0)
    fail("invalid answer fraction range");
  if (noise_sigma < 0.0) fail("noise_sigma must be >= 0");
  if (!(gap_fraction >= 0.0 && gap_fraction < 1.0)) fail("gap_fraction must be in [0, 1)");
  if (text_context < 0.0) fail("text_context must be >= 0");
}

namespace {

using Latent = Eigen::VectorXf;
using Projection = Eigen::MatrixXf; // rank x dim

struct World
{
  Latent marker;
  Projection signal[3];
  Projection background[3];
  Projection left_context;  // text only
  Projection right_context;
};

Eigen::MatrixXf gaussian(std::mt19937_64& rng, Index rows, Index cols, double scale)
{
  std::normal_distribution<double> dist(0.0, scale);
  Eigen::MatrixXf m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(dist(rng));
  return m;
}

World make_world(const SynthConfig& c)
{
  std::mt19937_64 rng(c.pattern_seed);
  World w;
  int dims[3] = {c.visual_dim, c.audio_dim, c.text_dim};
  w.marker = gaussian(rng, c.latent_rank, 1, 1.0).col(0);
  w.marker *= std::sqrt(static_cast<float>(c.latent_rank)) / w.marker.norm();
  for (int m = 0; m < 3; ++m) {
    double s = 1.0 / std::sqrt(static_cast<double>(c.latent_rank));
    w.signal[m] = gaussian(rng, c.latent_rank, dims[m], s);
    w.background[m] = gaussian(rng, c.latent_rank, dims[m], s);
  }
  double s = 1.0 / std::sqrt(static_cast<double>(c.latent_rank));
  w.left_context = gaussian(rng, c.latent_rank, c.text_dim, s);
  w.right_context = gaussian(rng, c.latent_rank, c.text_dim, s);
  return w;
}

// Contiguous subtitle slots: `tokens` occupied, `gaps` empty, grouped in a few
// blocks at random insertion points.
std::vector<bool> layout_slots(std::mt19937_64& rng, int tokens, int gaps)
{
  std::vector<bool> occupied;
  if (gaps == 0) return std::vector<bool>(tokens, true);
  int blocks = std::min(gaps, 1 + static_cast<int>(rng() % 3));
  std::vector<int> sizes(blocks, 1);
  for (int g = blocks; g < gaps; ++g) sizes[rng() % blocks] += 1;
  std::vector<int> inserts(blocks);
  for (auto& p : inserts) p = static_cast<int>(rng() % (tokens + 1));
  std::sort(inserts.begin(), inserts.end());
  int b = 0;
  for (int t = 0; t <= tokens; ++t) {
    while (b < blocks && inserts[b] == t) {
      occupied.insert(occupied.end(), sizes[b], false);
      ++b;
    }
    if (t < tokens) occupied.push_back(true);
  }
  return occupied;
}

// Cell boundaries of `slots` slots covering `cells` grid cells, every slot at
// least one cell wide (slots <= cells).
std::vector<int> slot_bounds(std::mt19937_64& rng, int cells, int slots)
{
  std::vector<int> cuts(cells - 1);
  for (int i = 0; i < cells - 1; ++i) cuts[i] = i + 1;
  std::shuffle(cuts.begin(), cuts.end(), rng);
  cuts.resize(slots - 1);
  std::sort(cuts.begin(), cuts.end());
  std::vector<int> bounds{0};
  bounds.insert(bounds.end(), cuts.begin(), cuts.end());
  bounds.push_back(cells);
  return bounds;
}

// Answer grid span (s, e) with both ends on slot boundaries and e before the
// last grid position, as close to `target` cells long as the layout allows.
std::pair<int, int> pick_answer(std::mt19937_64& rng, const std::vector<int>& bounds, int target)
{
  const int last = bounds.back() - 1;
  std::vector<std::pair<int, int>> best;
  int best_gap = -1;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    for (std::size_t j = i + 1; j < bounds.size() && bounds[j] <= last; ++j) {
      int gap = std::abs(bounds[j] - bounds[i] - target);
      if (best_gap < 0 || gap < best_gap) {
        best.clear();
        best_gap = gap;
      }
      if (gap == best_gap) best.emplace_back(bounds[i], bounds[j]);
    }
  }
  if (best.empty()) return {0, last};
  return best[rng() % best.size()];
}

} // namespace

Dataset synth_generate(const SynthConfig& c)
{
  c.validate();
  const World world = make_world(c);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto uniform_int = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  auto add_noise = [&](FeatureMatrix& m) {
    if (c.noise_sigma == 0.0) return;
    for (Index i = 0; i < m.size(); ++i) m.data()[i] += static_cast<float>(c.noise_sigma * noise(rng));
  };

  Dataset ds;
  ds.split = c.split;
  for (int vi = 0; vi < c.n_videos; ++vi) {
    VideoSample v;
    char id[64];
    std::snprintf(id, sizeof id, "%s-%s-%04d", c.id_prefix.c_str(), to_string(c.split).c_str(), vi);
    v.video_id = id;

    const int vn = uniform_int(c.min_video_len, c.max_video_len);
    const int tn = uniform_int(c.min_text_len, c.max_text_len);
    const int an = std::max(2, static_cast<int>(std::lround(vn * c.audio_length_ratio)));
    const double step = c.time_step_seconds;
    v.duration_s = vn * step;

    // Subtitle layout: slots of whole grid cells, some left empty.
    int n_sub = tn - c.question_len;
    int n_slots = static_cast<int>(std::lround(n_sub / (1.0 - c.gap_fraction)));
    if (n_slots > vn) {
      n_slots = vn;
      n_sub = std::max(1, static_cast<int>(std::lround(vn * (1.0 - c.gap_fraction))));
    }
    const int text_len = c.question_len + n_sub;
    const auto slots = layout_slots(rng, n_sub, std::max(0, n_slots - n_sub));
    const auto bounds = slot_bounds(rng, vn, static_cast<int>(slots.size()));
    std::vector<SubtitleToken> tokens;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      if (!slots[k]) continue;
      tokens.push_back({c.question_len + static_cast<int>(tokens.size()), bounds[k] * step, bounds[k + 1] * step});
    }
    v.tsm = TimeSpanMap(tokens);

    const Latent scene = gaussian(rng, c.latent_rank, 1, 1.0).col(0);
    Eigen::RowVectorXf bg[3];
    for (int m = 0; m < 3; ++m)
      bg[m] = static_cast<float>(c.background_strength) * (scene.transpose() * world.background[m]);

    auto base_sequence = [&](Modality modality, int m, Index len, double time_step) {
      FeatureSequence seq;
      seq.modality = modality;
      seq.time_step_seconds = time_step;
      seq.values = bg[m].replicate(len, 1);
      return seq;
    };

    v.visual = base_sequence(Modality::Visual, 0, vn, step);
    v.audio = base_sequence(Modality::Audio, 1, an, v.duration_s / an);

    for (int qi = 0; qi < c.questions_per_video; ++qi) {
      QAInstance qa;
      qa.question_id = v.video_id + "-q" + std::to_string(qi);
      qa.language = (rng() & 1) ? Language::Zh : Language::En;

      const int min_len = std::max(1, static_cast<int>(std::lround(c.min_answer_fraction * vn)));
      const int max_len = std::max(min_len, static_cast<int>(std::lround(c.max_answer_fraction * vn)));
      const auto [s, e] = pick_answer(rng, bounds, uniform_int(min_len, max_len));
      qa.gt_start_s = s * step;
      qa.gt_end_s = e * step;

      const Latent question = gaussian(rng, c.latent_rank, 1, 1.0).col(0);
      const Latent answer = world.marker + question;
      const float strength = static_cast<float>(c.answer_signal_strength);
      auto in_answer = [&](double t) { return t >= qa.gt_start_s - 1e-9 && t <= qa.gt_end_s + 1e-9; };

      Eigen::RowVectorXf vis = static_cast<float>(c.visual_gain) * strength * (answer.transpose() * world.signal[0]);
      Eigen::RowVectorXf aud = static_cast<float>(c.audio_gain) * strength * (answer.transpose() * world.signal[1]);
      for (int i = 0; i < vn; ++i)
        if (in_answer(i * step)) v.visual.values.row(i) += vis;
      for (int i = 0; i < an; ++i)
        if (in_answer(i * v.audio.time_step_seconds)) v.audio.values.row(i) += aud;

      // Per-token content latent, then neighbour mixing.
      Eigen::MatrixXf content = Eigen::MatrixXf::Zero(text_len, c.latent_rank);
      for (int i = 0; i < c.question_len; ++i) content.row(i) = strength * question.transpose();
      for (const auto& t : v.tsm.entries()) {
        double mid = 0.5 * (t.start_s + t.end_s);
        if (in_answer(mid)) content.row(t.token_index) = static_cast<float>(c.text_gain) * strength * answer.transpose();
      }
      qa.textual.modality = Modality::Textual;
      qa.textual.values = bg[2].replicate(text_len, 1);
      qa.textual.values += content * world.signal[2];
      const float ctx = static_cast<float>(c.text_context);
      if (text_len > 1 && ctx > 0.0f) {
        qa.textual.values.bottomRows(text_len - 1) += ctx * content.topRows(text_len - 1) * world.left_context;
        qa.textual.values.topRows(text_len - 1) += ctx * content.bottomRows(text_len - 1) * world.right_context;
      }
      add_noise(qa.textual.values);
      v.qa.push_back(std::move(qa));
    }
    add_noise(v.visual.values);
    add_noise(v.audio.values);
    ds.videos.push_back(std::move(v));
  }
  ds.validate();
  return ds;
}

} // namespace avtsl
