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
#include <map>
#include <string>
#include <vector>

#include "avtsl/span.hpp"

namespace avtsl {

inline const std::vector<double> kDefaultThresholds = {0.3, 0.5, 0.7};

// |a n b| / |a u b| over continuous second intervals. A zero-length union
// scores 1 when both spans are the same point and 0 otherwise.
double temporal_iou(const SecondsSpan& a, const SecondsSpan& b);

struct SampleResult
{
  std::string question_id;
  SecondsSpan predicted;
  SecondsSpan ground_truth;
  double iou = 0.0;
};

struct EvalReport
{
  std::map<double, double> r_at_1; // IoU threshold -> fraction of samples at or above it
  double miou = 0.0;
  int n_samples = 0;
  std::vector<SampleResult> per_sample;

  std::string to_json(bool with_samples = true) const;
  // Plain-text table: IoU=0.3 | IoU=0.5 | IoU=0.7 | mIoU, in percent.
  std::string to_table(const std::string& method) const;
};

EvalReport evaluate(const std::vector<std::string>& question_ids, const std::vector<SecondsSpan>& predictions,
                    const std::vector<SecondsSpan>& ground_truths,
                    const std::vector<double>& thresholds = kDefaultThresholds);

// The reference span a prediction is scored against: the annotation snapped
// to the video grid it is supervised on.
SecondsSpan grid_ground_truth(const QAInstance& qa, const VideoSample& video);

// Uniformly samples a start position on each video's grid, then an end
// position at or after it, and scores the result like a model prediction.
EvalReport random_pick_baseline(const Dataset& dataset, std::uint64_t seed,
                                const std::vector<double>& thresholds = kDefaultThresholds);

} // namespace avtsl
