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

#include "avtsl/span.hpp"

#include <algorithm>

namespace avtsl {

std::string to_string(SpanDomain d) { return d == SpanDomain::VideoGrid ? "video_grid" : "token"; }

SpanPrediction decode_span(std::span<const double> start_logits, std::span<const double> end_logits,
                           SpanDomain domain, Index first, Index last)
{
  const Index n = static_cast<Index>(start_logits.size());
  if (n < 1) throw DimensionError("decode_span: empty logits");
  if (static_cast<Index>(end_logits.size()) != n)
    throw DimensionError("decode_span: start/end logits differ in length");
  if (last < 0) last = n - 1;
  if (first < 0 || first > last || last >= n)
    throw DimensionError("decode_span: window [" + std::to_string(first) + ", " + std::to_string(last) +
                         "] outside " + std::to_string(n) + " positions");

  SpanPrediction best{domain, first, first, start_logits[first] + end_logits[first]};
  Index best_start = first;
  for (Index e = first; e <= last; ++e) {
    if (start_logits[e] > start_logits[best_start]) best_start = e;
    double score = start_logits[best_start] + end_logits[e];
    // Equal scores: the stronger start, then the earlier start, then the
    // earlier end.
    bool better = score > best.score;
    if (score == best.score) {
      double a = start_logits[best_start], b = start_logits[best.start];
      better = a > b || (a == b && best_start < best.start);
    }
    if (better) {
      best.start = best_start;
      best.end = e;
      best.score = score;
    }
  }
  return best;
}

namespace {

int to_token(const TimeSpanMap& tsm, Index i)
{
  int idx = static_cast<int>(i);
  return tsm.contains(idx) ? idx : tsm.nearest_token(idx);
}

} // namespace

SpanPrediction convert_span(const SpanPrediction& pred, const TimeSpanMap& tsm, double grid_step, Index grid_length,
                            SpanDomain to_domain)
{
  if (tsm.empty()) throw MappingError("convert_span: empty time-span map");
  SpanPrediction out = pred;
  out.domain = to_domain;
  if (pred.domain == to_domain) return out;

  if (to_domain == SpanDomain::Token) {
    out.start = tsm.time_to_token(static_cast<double>(pred.start) * grid_step);
    out.end = tsm.time_to_token(static_cast<double>(pred.end) * grid_step, Endpoint::End);
  }
  else {
    double ts = tsm.token_to_time(to_token(tsm, pred.start), Endpoint::Start);
    double te = tsm.token_to_time(to_token(tsm, pred.end), Endpoint::End);
    out.start = time_to_grid_index(ts, grid_step, grid_length);
    out.end = time_to_grid_index(te, grid_step, grid_length);
  }
  if (out.start > out.end) std::swap(out.start, out.end);
  return out;
}

SecondsSpan span_seconds(const SpanPrediction& pred, const TimeSpanMap& tsm, double grid_step)
{
  SecondsSpan s;
  if (pred.domain == SpanDomain::VideoGrid) {
    s.start = static_cast<double>(pred.start) * grid_step;
    s.end = static_cast<double>(pred.end) * grid_step;
  }
  else {
    s.start = tsm.token_to_time(to_token(tsm, pred.start), Endpoint::Start);
    s.end = tsm.token_to_time(to_token(tsm, pred.end), Endpoint::End);
  }
  if (s.start > s.end) std::swap(s.start, s.end);
  return s;
}

double index_iou(const SpanPrediction& a, const SpanPrediction& b)
{
  Index inter = std::min(a.end, b.end) - std::max(a.start, b.start) + 1;
  if (inter <= 0) return 0.0;
  Index uni = (a.end - a.start + 1) + (b.end - b.start + 1) - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace avtsl
