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
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "avtsl/eval.hpp"
#include "avtsl/loss.hpp"

namespace avtsl {

struct RunConfig
{
  Index hidden_dim = 1024;
  Index heads = 8;
  Index conv_width = 1;
  double learning_rate = 8e-6;
  int epochs = 15;
  long max_steps = 0; // 0: no cap beyond epochs
  std::uint64_t seed = 0;
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  bool use_audio = true;
  bool use_dtl = true;
  Predictor eval_predictor = Predictor::T;
  std::string checkpoint_dir;
  int precision = 32;

  // AdamW
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;

  // Unknown keys are rejected; absent keys keep their defaults.
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_json() const;
};

// Model shape implied by a run configuration and a dataset's feature dims.
ModelConfig model_config(const RunConfig& run, const Dataset& data);

///////////////////////////////////////////
// Optimizer
///////////////////////////////////////////

template <typename Scalar>
struct AdamState
{
  long step = 0;
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;
};

// One AdamW update over every parameter of the store: decoupled weight
// decay, then the bias-corrected Adam step.
template <typename Scalar>
void adamw_step(ParameterStore<Scalar>& store, AdamState<Scalar>& state, const RunConfig& cfg);

///////////////////////////////////////////
// Inference
///////////////////////////////////////////

struct PredictionSet
{
  std::optional<SpanPrediction> av;
  SpanPrediction v;
  std::optional<SpanPrediction> t; // absent without subtitle tokens
  std::optional<SecondsSpan> av_seconds;
  SecondsSpan v_seconds;
  std::optional<SecondsSpan> t_seconds;

  // Seconds span of one predictor; throws when it produced nothing.
  SecondsSpan seconds(Predictor p) const;
};

template <typename Scalar>
PredictionSet predict(AvtslModel<Scalar>& model, const VideoSample& video, const QAInstance& qa);

template <typename Scalar>
EvalReport evaluate_model(AvtslModel<Scalar>& model, const Dataset& data, Predictor predictor,
                          const std::vector<double>& thresholds = kDefaultThresholds);

///////////////////////////////////////////
// Training
///////////////////////////////////////////

struct StepRecord
{
  long step = 0; // global, 0-based
  int epoch = 0;
  std::string question_id;
  LossRecord loss;

  std::string to_json() const;
};

struct EpochRecord
{
  int epoch = 0;
  std::optional<double> valid_miou;
  bool improved = false;
};

// Single-writer training loop, batch size 1. The sample order of an epoch is
// a pure function of (seed, epoch), so a run restored from a saved state at
// global step k continues exactly as the uninterrupted run would.
template <typename Scalar>
class Trainer
{
public:
  Trainer(const RunConfig& config, const Dataset& train, const Dataset* valid = nullptr);
  ~Trainer();

  // One optimizer step on the next sample.
  StepRecord step();

  // Steps until epochs (or max_steps) are exhausted. Validates after each
  // epoch and writes the best checkpoint when a checkpoint dir is set.
  void run(const std::function<void(const StepRecord&)>& on_step = {},
           const std::function<void(const EpochRecord&)>& on_epoch = {});

  long global_step() const { return adam_.step; }
  long total_steps() const;
  std::size_t samples_per_epoch() const;
  std::optional<double> best_valid_miou() const { return best_valid_miou_; }

  // Sample positions of one epoch.
  std::vector<std::size_t> epoch_order(int epoch) const;

  // Parameters, optimizer moments and counters. The archive carries the
  // tensors; a JSON sidecar (path + ".json") carries the counters.
  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

  AvtslModel<Scalar>& model() { return *model_; }
  const RunConfig& config() const { return config_; }

private:
  struct Sample;

  RunConfig config_;
  const Dataset& train_;
  const Dataset* valid_;
  std::unique_ptr<AvtslModel<Scalar>> model_;
  AdamState<Scalar> adam_;
  std::vector<Sample> samples_;
  std::optional<double> best_valid_miou_;
};

// Per-seed reports of repeated runs and their mean.
struct RepeatSummary
{
  std::vector<std::uint64_t> seeds;
  std::vector<EvalReport> reports;
  EvalReport mean;
};

RepeatSummary summarize_repeats(const std::vector<std::uint64_t>& seeds, const std::vector<EvalReport>& reports);

} // namespace avtsl
