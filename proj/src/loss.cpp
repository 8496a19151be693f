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

#include "avtsl/loss.hpp"

#include "json.hpp"

namespace avtsl {

std::string to_string(Predictor p)
{
  switch (p) {
  case Predictor::AV: return "AV";
  case Predictor::V: return "V";
  case Predictor::T: return "T";
  }
  return "?";
}

Predictor parse_predictor(const std::string& s)
{
  if (s == "AV" || s == "av" || s == "AP" || s == "ap") return Predictor::AV;
  if (s == "V" || s == "v" || s == "VP" || s == "vp") return Predictor::V;
  if (s == "T" || s == "t" || s == "TP" || s == "tp") return Predictor::T;
  throw ConfigError("unknown predictor '" + s + "' (expected AV, V or T)");
}

SpanContext span_context(const VideoSample& video)
{
  return {&video.tsm, video.visual.time_step_seconds, video.visual.length()};
}

SpanTargets make_targets(const QAInstance& qa, const VideoSample& video)
{
  const double step = video.visual.time_step_seconds;
  const Index len = video.visual.length();
  SpanTargets t;
  t.grid.domain = SpanDomain::VideoGrid;
  t.grid.start = time_to_grid_index(qa.gt_start_s, step, len);
  t.grid.end = time_to_grid_index(qa.gt_end_s, step, len);
  if (!video.tsm.empty()) t.token = convert_span(t.grid, video.tsm, step, len, SpanDomain::Token);
  return t;
}

PairWeight dynamic_weight(Predictor source, Predictor target, const SpanPrediction& source_span,
                          const SpanPrediction& target_span_converted)
{
  if (source_span.domain != target_span_converted.domain)
    throw ContractError("dynamic_weight: spans must share a domain");
  if (source_span.domain != domain_of(source))
    throw ContractError("dynamic_weight: spans must be in the source predictor's domain");
  return {source, target, index_iou(source_span, target_span_converted)};
}

std::string LossRecord::to_json() const
{
  nlohmann::json j;
  j["l1_av"] = l1_av ? nlohmann::json(*l1_av) : nlohmann::json(nullptr);
  j["l1_v"] = l1_v;
  j["l1_t"] = l1_t ? nlohmann::json(*l1_t) : nlohmann::json(nullptr);
  auto pairs_json = nlohmann::json::array();
  for (const auto& p : pairs)
    pairs_json.push_back({{"pair", to_string(p.source) + "-" + to_string(p.target)},
                          {"lambda", p.lambda},
                          {"loss", p.loss}});
  j["pairs"] = pairs_json;
  j["l2"] = l2;
  j["total"] = total;
  return j.dump();
}

} // namespace avtsl
