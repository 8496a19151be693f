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

// avtsl: train, evaluate and query span-localization models.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 a failed
// gradient check. Set AVTSL_LOG=quiet|info|debug for stderr verbosity.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "avtsl/checkpoint.hpp"
#include "avtsl/synth.hpp"
#include "avtsl/train.hpp"
#include "avtsl/verify.hpp"

namespace fs = std::filesystem;
using namespace avtsl;

namespace {

enum class Level { Quiet = 0, Info = 1, Debug = 2 };

Level log_level()
{
  static const Level level = [] {
    const char* env = std::getenv("AVTSL_LOG");
    std::string v = env ? env : "info";
    if (v == "quiet" || v == "0") return Level::Quiet;
    if (v == "debug" || v == "2") return Level::Debug;
    return Level::Info;
  }();
  return level;
}

void log(Level level, const std::string& msg)
{
  if (static_cast<int>(level) <= static_cast<int>(log_level())) std::cerr << msg << "\n";
}

struct Overrides
{
  std::optional<std::uint64_t> seed;
  std::optional<Index> dim;
  std::optional<Index> heads;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<long> max_steps;
  std::optional<int> precision;
  std::optional<std::string> predictor;
  std::optional<std::string> train, valid, test, out;
  bool no_audio = false;
  bool no_dtl = false;
};

void add_model_flags(CLI::App* cmd, std::string& config_path, Overrides& o)
{
  cmd->add_option("--config", config_path, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--dim", o.dim, "Hidden dim d");
  cmd->add_option("--heads", o.heads, "Attention heads H");
  cmd->add_option("--precision", o.precision, "Scalar width: 32 or 64");
  cmd->add_flag("--no-audio", o.no_audio, "Drop the audio branch and the audio-visual predictor");
  cmd->add_option("--train", o.train, "Training manifest");
  cmd->add_option("--valid", o.valid, "Validation manifest");
  cmd->add_option("--test", o.test, "Test manifest");
}

RunConfig resolve_config(const std::string& path, const Overrides& o)
{
  RunConfig c = path.empty() ? RunConfig{} : RunConfig::load(path);
  if (o.seed) c.seed = *o.seed;
  if (o.dim) c.hidden_dim = *o.dim;
  if (o.heads) c.heads = *o.heads;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.lr) c.learning_rate = *o.lr;
  if (o.max_steps) c.max_steps = *o.max_steps;
  if (o.precision) c.precision = *o.precision;
  if (o.predictor) c.eval_predictor = parse_predictor(*o.predictor);
  if (o.train) c.train_path = *o.train;
  if (o.valid) c.valid_path = *o.valid;
  if (o.test) c.test_path = *o.test;
  if (o.out) c.checkpoint_dir = *o.out;
  if (o.no_audio) c.use_audio = false;
  if (o.no_dtl) c.use_dtl = false;
  c.validate();
  return c;
}

// AP, VP, TP as in the result tables.
std::string predictor_label(Predictor p)
{
  return std::string("AVTSL(") + (p == Predictor::AV ? "A" : to_string(p)) + "P)";
}

Dataset require_dataset(const std::string& path, const char* what)
{
  if (path.empty()) throw ConfigError(std::string("no ") + what + " dataset given");
  return load_dataset(path);
}

std::string split_path(const RunConfig& c, const std::string& split)
{
  if (split == "train") return c.train_path;
  if (split == "valid") return c.valid_path;
  if (split == "test") return c.test_path;
  throw ConfigError("unknown split '" + split + "' (expected train, valid or test)");
}

///////////////////////////////////////////
// train
///////////////////////////////////////////

template <typename Scalar>
EvalReport train_once(const RunConfig& cfg, const Dataset& train, const Dataset* valid, const std::string& resume)
{
  Trainer<Scalar> trainer(cfg, train, valid);
  if (!resume.empty()) {
    trainer.load_state(resume);
    log(Level::Info, "resumed at step " + std::to_string(trainer.global_step()));
  }
  log(Level::Info, "parameters: " + std::to_string(trainer.model().parameters().scalar_count()) + ", steps: " +
                     std::to_string(trainer.total_steps()));

  std::ofstream log_file;
  if (!cfg.checkpoint_dir.empty()) {
    fs::create_directories(cfg.checkpoint_dir);
    std::ofstream(fs::path(cfg.checkpoint_dir) / "config.json") << cfg.to_json() << "\n";
    log_file.open(fs::path(cfg.checkpoint_dir) / "train_log.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  }
  trainer.run(
    [&](const StepRecord& r) {
      if (log_file) log_file << r.to_json() << "\n";
      log(Level::Debug, r.to_json());
    },
    [&](const EpochRecord& e) {
      std::string msg = "epoch " + std::to_string(e.epoch + 1);
      if (e.valid_miou) msg += "  valid mIoU(" + to_string(cfg.eval_predictor) + ") " + std::to_string(*e.valid_miou);
      if (e.improved) msg += "  *";
      log(Level::Info, msg);
    });

  const Dataset& scored = valid && valid->qa_count() > 0 ? *valid : train;
  return evaluate_model(trainer.model(), scored, cfg.eval_predictor);
}

int cmd_train(const RunConfig& base, const std::string& resume, int repeat)
{
  Dataset train = require_dataset(base.train_path, "training");
  std::optional<Dataset> valid;
  if (!base.valid_path.empty()) valid = load_dataset(base.valid_path);
  if (repeat > 1 && !resume.empty()) throw ConfigError("--resume cannot be combined with --repeat");

  std::vector<std::uint64_t> seeds;
  std::vector<EvalReport> reports;
  for (int i = 0; i < repeat; ++i) {
    RunConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(i);
    if (repeat > 1 && !cfg.checkpoint_dir.empty())
      cfg.checkpoint_dir = (fs::path(base.checkpoint_dir) / ("seed-" + std::to_string(cfg.seed))).string();
    const Dataset* v = valid ? &*valid : nullptr;
    EvalReport r = cfg.precision == 64 ? train_once<double>(cfg, train, v, resume)
                                       : train_once<float>(cfg, train, v, resume);
    seeds.push_back(cfg.seed);
    reports.push_back(r);
    std::cout << r.to_table(predictor_label(cfg.eval_predictor) + " seed " + std::to_string(cfg.seed));
  }
  if (repeat > 1) {
    auto summary = summarize_repeats(seeds, reports);
    std::cout << summary.mean.to_table("mean of " + std::to_string(repeat) + " seeds");
  }
  return 0;
}

///////////////////////////////////////////
// eval / predict
///////////////////////////////////////////

template <typename Scalar>
int eval_with(const RunConfig& cfg, const Dataset& data, const std::string& checkpoint, bool as_json)
{
  AvtslModel<Scalar> model(model_config(cfg, data));
  load_checkpoint(checkpoint, model.parameters());
  auto report = evaluate_model(model, data, cfg.eval_predictor);
  if (as_json)
    std::cout << report.to_json() << "\n";
  else
    std::cout << report.to_table(predictor_label(cfg.eval_predictor));
  return 0;
}

template <typename Scalar>
int predict_with(const RunConfig& cfg, const Dataset& data, const std::string& checkpoint,
                 const std::string& question)
{
  AvtslModel<Scalar> model(model_config(cfg, data));
  load_checkpoint(checkpoint, model.parameters());
  auto fmt = [](const SecondsSpan& s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f-%.3f", s.start, s.end);
    return std::string(buf);
  };
  bool found = false;
  for (const auto& video : data.videos) {
    for (const auto& qa : video.qa) {
      if (!question.empty() && qa.question_id != question) continue;
      found = true;
      auto ps = predict(model, video, qa);
      std::cout << video.video_id << "\t" << qa.question_id;
      std::cout << "\tAV=" << (ps.av_seconds ? fmt(*ps.av_seconds) : "-");
      std::cout << "\tV=" << fmt(ps.v_seconds);
      std::cout << "\tT=" << (ps.t_seconds ? fmt(*ps.t_seconds) : "-");
      std::cout << "\tanswer=" << fmt(ps.t_seconds ? *ps.t_seconds : ps.v_seconds) << "\n";
    }
  }
  if (!found) throw ConfigError("question '" + question + "' not found");
  return 0;
}

///////////////////////////////////////////
// grad-check
///////////////////////////////////////////

int cmd_grad_check(std::uint64_t seed)
{
  auto report = [](const std::vector<GradCheckResult>& results) {
    for (const auto& r : results) {
      std::printf("%-28s %s  max_rel=%.3e  tol=%.0e  checked=%ld  skipped=%ld\n", r.name.c_str(),
                  r.passed ? "ok  " : "FAIL", r.max_rel_error, r.tolerance, static_cast<long>(r.checked),
                  static_cast<long>(r.skipped));
    }
    return all_passed(results);
  };
  bool ok = report(grad_check_ops(seed));
  ok = report(grad_check_model(seed)) && ok;
  std::printf("%s\n", ok ? "grad-check passed" : "grad-check FAILED");
  return ok ? 0 : 2;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Audio-visual-textual span localization"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides o;

  auto* train = app.add_subcommand("train", "Train a model");
  add_model_flags(train, config_path, o);
  train->add_option("--epochs", o.epochs, "Epochs");
  train->add_option("--lr", o.lr, "Learning rate");
  train->add_option("--max-steps", o.max_steps, "Stop after this many steps");
  train->add_flag("--no-dtl", o.no_dtl, "Train with the supervised losses only");
  train->add_option("--predictor", o.predictor, "Predictor for validation: AV, V or T");
  train->add_option("--out", o.out, "Checkpoint directory");
  std::string resume;
  int repeat = 1;
  train->add_option("--resume", resume, "Training state to continue from (last.avts)");
  train->add_option("--repeat", repeat, "Train this many consecutive seeds and report the mean")
    ->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_model_flags(eval, config_path, o);
  std::string checkpoint, split = "test", data_path;
  bool as_json = false;
  eval->add_option("--checkpoint", checkpoint, "Parameter checkpoint (best.avts)")->required();
  eval->add_option("--split", split, "train, valid or test");
  eval->add_option("--data", data_path, "Manifest to evaluate instead of a configured split");
  eval->add_option("--predictor", o.predictor, "AV, V or T");
  eval->add_flag("--json", as_json, "Print the report as JSON");

  auto* pred = app.add_subcommand("predict", "Print every predictor's span per question");
  add_model_flags(pred, config_path, o);
  std::string question;
  pred->add_option("--checkpoint", checkpoint, "Parameter checkpoint")->required();
  pred->add_option("--data", data_path, "Manifest holding the video and question features")->required();
  pred->add_option("--question", question, "Only this question id");

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset");
  SynthConfig sc;
  std::string out_dir, split_name = "train";
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--n-videos", sc.n_videos, "Videos");
  gen->add_option("--questions-per-video", sc.questions_per_video, "Questions per video");
  gen->add_option("--seed", sc.seed, "Sample seed");
  gen->add_option("--pattern-seed", sc.pattern_seed, "Seed of the shared feature world");
  gen->add_option("--noise", sc.noise_sigma, "Feature noise sigma");
  gen->add_option("--gap-fraction", sc.gap_fraction, "Share of the timeline without subtitles");
  gen->add_option("--visual-gain", sc.visual_gain, "Strength of the planted answer in visual features");
  gen->add_option("--audio-gain", sc.audio_gain, "Strength of the planted answer in audio features");
  gen->add_option("--text-gain", sc.text_gain, "Strength of the planted answer in subtitle tokens");
  gen->add_option("--text-context", sc.text_context, "Weight of neighbouring-token content in text features");
  gen->add_option("--split", split_name, "train, valid or test");
  gen->add_option("--id-prefix", sc.id_prefix, "Video id prefix");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every op and the full loss");
  std::uint64_t gc_seed = 0;
  gc->add_option("--seed", gc_seed, "Seed of the random cases");

  auto* base = app.add_subcommand("baseline", "Score the random-pick baseline");
  std::uint64_t base_seed = 0;
  base->add_option("--data", data_path, "Manifest")->required();
  base->add_option("--seed", base_seed, "Seed");

  try {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(resolve_config(config_path, o), resume, repeat);
    if (*eval) {
      RunConfig cfg = resolve_config(config_path, o);
      Dataset data = require_dataset(data_path.empty() ? split_path(cfg, split) : data_path, split.c_str());
      return cfg.precision == 64 ? eval_with<double>(cfg, data, checkpoint, as_json)
                                 : eval_with<float>(cfg, data, checkpoint, as_json);
    }
    if (*pred) {
      RunConfig cfg = resolve_config(config_path, o);
      Dataset data = load_dataset(data_path);
      return cfg.precision == 64 ? predict_with<double>(cfg, data, checkpoint, question)
                                 : predict_with<float>(cfg, data, checkpoint, question);
    }
    if (*gen) {
      sc.split = parse_split(split_name);
      sc.validate();
      std::cout << write_dataset(synth_generate(sc), out_dir).string() << "\n";
      return 0;
    }
    if (*gc) return cmd_grad_check(gc_seed);
    if (*base) {
      auto report = random_pick_baseline(load_dataset(data_path), base_seed);
      std::cout << report.to_table("Random Pick");
      return 0;
    }
  }
  catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
