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

#include <span>
#include <string>
#include <vector>

#include "avtsl/dataset.hpp"

namespace avtsl {

// Index domain of a span: positions on the visual time grid, or textual tokens.
enum class SpanDomain { VideoGrid, Token };

std::string to_string(SpanDomain d);

struct SpanPrediction
{
  SpanDomain domain = SpanDomain::VideoGrid;
  Index start = 0;
  Index end = 0;
  double score = 0.0;

  bool operator==(const SpanPrediction&) const = default;
};

// Seconds covered by a span, continuous convention.
struct SecondsSpan
{
  double start = 0.0;
  double end = 0.0;

  bool operator==(const SecondsSpan&) const = default;
};

// argmax over s <= e of start[s] + end[e], restricted to positions
// [first, last] (last < 0 means the final position). One pass, tracking the
// best start seen so far. Ties go to the larger start logit, then the
// earliest s, then the earliest e.
SpanPrediction decode_span(std::span<const double> start_logits, std::span<const double> end_logits,
                           SpanDomain domain, Index first = 0, Index last = -1);

template <typename Derived>
SpanPrediction decode_span(const Eigen::MatrixBase<Derived>& start_logits, const Eigen::MatrixBase<Derived>& end_logits,
                           SpanDomain domain, Index first = 0, Index last = -1)
{
  std::vector<double> s(start_logits.size()), e(end_logits.size());
  for (Index i = 0; i < start_logits.size(); ++i) s[i] = static_cast<double>(start_logits.derived().data()[i]);
  for (Index i = 0; i < end_logits.size(); ++i) e[i] = static_cast<double>(end_logits.derived().data()[i]);
  return decode_span(std::span<const double>(s), std::span<const double>(e), domain, first, last);
}

// Moves a span between the video grid and the token domain through the
// time-span map. Grid index i sits at i * grid_step seconds; seconds map to
// grid indices by rounding, clamped to [0, grid_length). Token indices absent
// from the map (question tokens) snap to the nearest subtitle token. The
// result is re-ordered so start <= end; the score is carried over.
SpanPrediction convert_span(const SpanPrediction& pred, const TimeSpanMap& tsm, double grid_step, Index grid_length,
                            SpanDomain to_domain);

// Seconds spanned by a prediction: grid spans use index * step, token spans
// use the subtitle start of the first token and the end of the last.
SecondsSpan span_seconds(const SpanPrediction& pred, const TimeSpanMap& tsm, double grid_step);

// IoU of two index intervals with inclusive ends (length = e - s + 1).
double index_iou(const SpanPrediction& a, const SpanPrediction& b);

} // namespace avtsl
