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

#include "avtsl/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <sstream>

#include "json.hpp"

namespace avtsl {

double temporal_iou(const SecondsSpan& a, const SecondsSpan& b)
{
  if (a.start > a.end || b.start > b.end) throw ContractError("temporal_iou: span with start > end");
  double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  double uni = (a.end - a.start) + (b.end - b.start) - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return inter / uni;
}

EvalReport evaluate(const std::vector<std::string>& question_ids, const std::vector<SecondsSpan>& predictions,
                    const std::vector<SecondsSpan>& ground_truths, const std::vector<double>& thresholds)
{
  if (predictions.size() != ground_truths.size() || question_ids.size() != predictions.size())
    throw ValidationError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(ground_truths.size()) + " ground truths and " +
                          std::to_string(question_ids.size()) + " ids");
  EvalReport report;
  report.n_samples = static_cast<int>(predictions.size());
  for (double m : thresholds) report.r_at_1[m] = 0.0;

  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double iou = temporal_iou(predictions[i], ground_truths[i]);
    report.per_sample.push_back({question_ids[i], predictions[i], ground_truths[i], iou});
    total += iou;
    for (auto& [m, hits] : report.r_at_1)
      if (iou >= m) hits += 1.0;
  }
  if (report.n_samples > 0) {
    report.miou = total / report.n_samples;
    for (auto& [m, hits] : report.r_at_1) hits /= report.n_samples;
  }
  return report;
}

std::string EvalReport::to_json(bool with_samples) const
{
  nlohmann::json j;
  j["n_samples"] = n_samples;
  j["miou"] = miou;
  j["r_at_1"] = nlohmann::json::object();
  for (const auto& [m, r] : r_at_1) {
    char key[32];
    std::snprintf(key, sizeof key, "%.2f", m);
    j["r_at_1"][key] = r;
  }
  if (with_samples) {
    j["per_sample"] = nlohmann::json::array();
    for (const auto& s : per_sample) {
      j["per_sample"].push_back({{"question_id", s.question_id},
                                 {"predicted", {s.predicted.start, s.predicted.end}},
                                 {"ground_truth", {s.ground_truth.start, s.ground_truth.end}},
                                 {"iou", s.iou}});
    }
  }
  return j.dump(2);
}

std::string EvalReport::to_table(const std::string& method) const
{
  std::ostringstream os;
  char buf[64];
  os << std::string(24, ' ');
  for (const auto& [m, r] : r_at_1) {
    std::snprintf(buf, sizeof buf, "  IoU=%.1f", m);
    os << buf;
  }
  os << "     mIoU\n";
  std::snprintf(buf, sizeof buf, "%-24s", method.c_str());
  os << buf;
  for (const auto& [m, r] : r_at_1) {
    std::snprintf(buf, sizeof buf, "  %7.2f", 100.0 * r);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "  %7.2f\n", 100.0 * miou);
  os << buf;
  return os.str();
}

SecondsSpan grid_ground_truth(const QAInstance& qa, const VideoSample& video)
{
  double step = video.visual.time_step_seconds;
  Index len = video.visual.length();
  return {static_cast<double>(time_to_grid_index(qa.gt_start_s, step, len)) * step,
          static_cast<double>(time_to_grid_index(qa.gt_end_s, step, len)) * step};
}

EvalReport random_pick_baseline(const Dataset& dataset, std::uint64_t seed, const std::vector<double>& thresholds)
{
  std::mt19937_64 rng(seed);
  std::vector<std::string> ids;
  std::vector<SecondsSpan> preds, gts;
  for (const auto& video : dataset.videos) {
    double step = video.visual.time_step_seconds;
    Index len = video.visual.length();
    for (const auto& qa : video.qa) {
      Index s = std::uniform_int_distribution<Index>(0, len - 1)(rng);
      Index e = std::uniform_int_distribution<Index>(s, len - 1)(rng);
      ids.push_back(qa.question_id);
      preds.push_back({static_cast<double>(s) * step, static_cast<double>(e) * step});
      gts.push_back(grid_ground_truth(qa, video));
    }
  }
  return evaluate(ids, preds, gts, thresholds);
}

} // namespace avtsl
