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

#include "avtsl/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "avtsl/checkpoint.hpp"
#include "json.hpp"

namespace avtsl {

namespace fs = std::filesystem;
using nlohmann::json;

///////////////////////////////////////////
// RunConfig
///////////////////////////////////////////

void RunConfig::validate() const
{
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be positive");
  if (heads < 1) throw ConfigError("heads must be positive");
  if (hidden_dim % heads != 0)
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  if (conv_width < 1 || conv_width % 2 == 0) throw ConfigError("conv_width must be a positive odd number");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1, got " + std::to_string(epochs));
  if (max_steps < 0) throw ConfigError("max_steps must not be negative");
  if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must not be negative");
}

RunConfig RunConfig::from_json(const std::string& text)
{
  json j;
  try {
    j = json::parse(text);
  }
  catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "hidden_dim") c.hidden_dim = value.get<Index>();
      else if (key == "heads") c.heads = value.get<Index>();
      else if (key == "conv_width") c.conv_width = value.get<Index>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "max_steps") c.max_steps = value.get<long>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "train_path") c.train_path = value.get<std::string>();
      else if (key == "valid_path") c.valid_path = value.get<std::string>();
      else if (key == "test_path") c.test_path = value.get<std::string>();
      else if (key == "use_audio") c.use_audio = value.get<bool>();
      else if (key == "use_dtl") c.use_dtl = value.get<bool>();
      else if (key == "eval_predictor") c.eval_predictor = parse_predictor(value.get<std::string>());
      else if (key == "checkpoint_dir") c.checkpoint_dir = value.get<std::string>();
      else if (key == "precision") c.precision = value.get<int>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "adam_eps") c.adam_eps = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  }
  catch (const json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path)
{
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = from_json(ss.str());
  // Relative paths are relative to the config file.
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (path.parent_path() / p).lexically_normal().string();
  };
  resolve(c.train_path);
  resolve(c.valid_path);
  resolve(c.test_path);
  resolve(c.checkpoint_dir);
  return c;
}

std::string RunConfig::to_json() const
{
  json j = {{"hidden_dim", hidden_dim},   {"heads", heads},
            {"conv_width", conv_width},   {"learning_rate", learning_rate},
            {"epochs", epochs},           {"max_steps", max_steps},
            {"seed", seed},               {"train_path", train_path},
            {"valid_path", valid_path},   {"test_path", test_path},
            {"use_audio", use_audio},     {"use_dtl", use_dtl},
            {"eval_predictor", avtsl::to_string(eval_predictor)},
            {"checkpoint_dir", checkpoint_dir},
            {"precision", precision},     {"beta1", beta1},
            {"beta2", beta2},             {"adam_eps", adam_eps},
            {"weight_decay", weight_decay}};
  return j.dump(2);
}

ModelConfig model_config(const RunConfig& run, const Dataset& data)
{
  if (data.videos.empty()) throw ConfigError("dataset has no videos to size the model from");
  const auto& first = data.videos.front();
  ModelConfig m;
  m.visual_dim = first.visual.dim();
  m.audio_dim = first.audio.dim();
  if (first.qa.empty()) throw ConfigError("video '" + first.video_id + "' has no questions");
  m.text_dim = first.qa.front().textual.dim();
  m.hidden_dim = run.hidden_dim;
  m.heads = run.heads;
  m.conv_width = run.conv_width;
  m.use_audio = run.use_audio;
  m.seed = run.seed;
  for (const auto& v : data.videos) {
    if (v.visual.dim() != m.visual_dim || (run.use_audio && v.audio.dim() != m.audio_dim))
      throw ShapeMismatchError(v.video_id, "feature dims differ from the first video's");
    for (const auto& q : v.qa)
      if (q.textual.dim() != m.text_dim)
        throw ShapeMismatchError(v.video_id, "question '" + q.question_id + "' text dim differs");
  }
  return m;
}

///////////////////////////////////////////
// Optimizer
///////////////////////////////////////////

template <typename Scalar>
void adamw_step(ParameterStore<Scalar>& store, AdamState<Scalar>& state, const RunConfig& cfg)
{
  if (state.m.size() != store.size()) {
    state.m.clear();
    state.v.clear();
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& p = store.at(i).value;
      state.m.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
      state.v.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
    }
  }
  ++state.step;
  const Scalar lr = static_cast<Scalar>(cfg.learning_rate);
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar eps = static_cast<Scalar>(cfg.adam_eps);
  const Scalar decay = static_cast<Scalar>(1.0 - cfg.learning_rate * cfg.weight_decay);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.step)));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.step)));

  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store.at(i);
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = b1 * m + (Scalar(1) - b1) * p.grad;
    v = b2 * v + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value *= decay;
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

///////////////////////////////////////////
// Inference
///////////////////////////////////////////

SecondsSpan PredictionSet::seconds(Predictor p) const
{
  switch (p) {
  case Predictor::AV:
    if (!av_seconds) throw ConfigError("the audio-visual predictor is disabled in this model");
    return *av_seconds;
  case Predictor::V: return v_seconds;
  case Predictor::T:
    if (!t_seconds) throw MappingError("no textual prediction: the video has no subtitle tokens");
    return *t_seconds;
  }
  return v_seconds;
}

template <typename Scalar>
PredictionSet predict(AvtslModel<Scalar>& model, const VideoSample& video, const QAInstance& qa)
{
  Tape<Scalar> tape(false);
  auto out = model.forward(tape, make_input<Scalar>(video, qa, model.config().use_audio));
  auto ctx = span_context(video);

  PredictionSet ps;
  ps.v = decode_in_context(out.logits.v, ctx);
  ps.v_seconds = span_seconds(ps.v, video.tsm, ctx.grid_step);
  if (out.logits.av) {
    ps.av = decode_in_context(*out.logits.av, ctx);
    ps.av_seconds = span_seconds(*ps.av, video.tsm, ctx.grid_step);
  }
  if (ctx.has_tokens()) {
    ps.t = decode_in_context(out.logits.t, ctx);
    ps.t_seconds = span_seconds(*ps.t, video.tsm, ctx.grid_step);
  }
  return ps;
}

template <typename Scalar>
EvalReport evaluate_model(AvtslModel<Scalar>& model, const Dataset& data, Predictor predictor,
                          const std::vector<double>& thresholds)
{
  if (predictor == Predictor::AV && !model.config().use_audio)
    throw ConfigError("cannot evaluate the audio-visual predictor of a model without audio");
  std::vector<std::string> ids;
  std::vector<SecondsSpan> preds, gts;
  for (const auto& video : data.videos) {
    for (const auto& qa : video.qa) {
      auto ps = predict(model, video, qa);
      ids.push_back(qa.question_id);
      // A video without subtitles gives the textual predictor nothing to
      // point at; its visual answer stands in.
      preds.push_back(predictor == Predictor::T && !ps.t_seconds ? ps.v_seconds : ps.seconds(predictor));
      gts.push_back(grid_ground_truth(qa, video));
    }
  }
  return evaluate(ids, preds, gts, thresholds);
}

///////////////////////////////////////////
// Trainer
///////////////////////////////////////////

std::string StepRecord::to_json() const
{
  json j = {{"step", step}, {"epoch", epoch}, {"question_id", question_id}};
  j["loss"] = json::parse(loss.to_json());
  return j.dump();
}

template <typename Scalar>
struct Trainer<Scalar>::Sample
{
  std::size_t video = 0;
  std::size_t qa = 0;
  ModelInput<Scalar> input;
  SpanTargets targets;
};

template <typename Scalar>
Trainer<Scalar>::Trainer(const RunConfig& config, const Dataset& train, const Dataset* valid)
  : config_(config), train_(train), valid_(valid)
{
  config_.validate();
  train_.validate();
  if (train_.qa_count() == 0) throw ConfigError("training set has no questions");
  auto mc = model_config(config_, train_);
  if (valid_) {
    valid_->validate();
    if (valid_->qa_count() > 0) {
      auto vc = model_config(config_, *valid_);
      if (vc.visual_dim != mc.visual_dim || vc.text_dim != mc.text_dim ||
          (mc.use_audio && vc.audio_dim != mc.audio_dim))
        throw ConfigError("validation feature dims differ from the training set's");
    }
  }
  model_ = std::make_unique<AvtslModel<Scalar>>(mc);

  for (std::size_t vi = 0; vi < train_.videos.size(); ++vi) {
    const auto& video = train_.videos[vi];
    for (std::size_t qi = 0; qi < video.qa.size(); ++qi) {
      Sample s;
      s.video = vi;
      s.qa = qi;
      s.input = make_input<Scalar>(video, video.qa[qi], config_.use_audio);
      s.targets = make_targets(video.qa[qi], video);
      samples_.push_back(std::move(s));
    }
  }
  auto& store = model_->parameters();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store.at(i).value;
    adam_.m.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
    adam_.v.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
  }
}

template <typename Scalar>
Trainer<Scalar>::~Trainer() = default;

template <typename Scalar>
long Trainer<Scalar>::total_steps() const
{
  long n = static_cast<long>(config_.epochs) * static_cast<long>(samples_.size());
  return config_.max_steps > 0 ? std::min(n, config_.max_steps) : n;
}

template <typename Scalar>
std::size_t Trainer<Scalar>::samples_per_epoch() const
{
  return samples_.size();
}

template <typename Scalar>
std::vector<std::size_t> Trainer<Scalar>::epoch_order(int epoch) const
{
  std::vector<std::size_t> order(samples_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

template <typename Scalar>
StepRecord Trainer<Scalar>::step()
{
  const long n = static_cast<long>(samples_.size());
  const long g = adam_.step;
  const int epoch = static_cast<int>(g / n);
  const Sample& s = samples_[epoch_order(epoch)[static_cast<std::size_t>(g % n)]];
  const auto& video = train_.videos[s.video];

  auto& store = model_->parameters();
  Tape<Scalar> tape;
  auto out = model_->forward(tape, s.input);
  auto breakdown = total_loss(out.logits, s.targets, span_context(video), config_.use_dtl);
  store.zero_grad();
  tape.backward(breakdown.total);
  adamw_step(store, adam_, config_);

  StepRecord rec;
  rec.step = g;
  rec.epoch = epoch;
  rec.question_id = video.qa[s.qa].question_id;
  rec.loss = breakdown.record();
  return rec;
}

template <typename Scalar>
void Trainer<Scalar>::run(const std::function<void(const StepRecord&)>& on_step,
                          const std::function<void(const EpochRecord&)>& on_epoch)
{
  const long n = static_cast<long>(samples_.size());
  const long total = total_steps();
  const fs::path dir = config_.checkpoint_dir;
  if (!dir.empty()) fs::create_directories(dir);

  while (adam_.step < total) {
    auto rec = step();
    if (on_step) on_step(rec);
    bool epoch_done = adam_.step % n == 0;
    if (!epoch_done && adam_.step < total) continue;

    EpochRecord er;
    er.epoch = rec.epoch;
    if (valid_ && valid_->qa_count() > 0) {
      er.valid_miou = evaluate_model(*model_, *valid_, config_.eval_predictor).miou;
      er.improved = !best_valid_miou_ || *er.valid_miou > *best_valid_miou_;
      if (er.improved) best_valid_miou_ = er.valid_miou;
    }
    else {
      // Nothing to select on: the latest weights are the best known.
      er.improved = true;
    }
    if (!dir.empty()) {
      if (er.improved) save_checkpoint(dir / "best.avts", model_->parameters());
      save_state(dir / "last.avts");
    }
    if (on_epoch) on_epoch(er);
  }
}

template <typename Scalar>
void Trainer<Scalar>::save_state(const fs::path& path) const
{
  const auto& store = model_->parameters();
  std::vector<ArchiveEntry> entries;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store.at(i);
    entries.push_back(to_entry<Scalar>("param/" + p.name, p.shape, p.value));
    entries.push_back(to_entry<Scalar>("adam.m/" + p.name, p.shape, adam_.m[i]));
    entries.push_back(to_entry<Scalar>("adam.v/" + p.name, p.shape, adam_.v[i]));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_archive(path, entries);

  json meta = {{"step", adam_.step},
               {"seed", config_.seed},
               {"samples_per_epoch", samples_.size()},
               {"precision", config_.precision},
               {"best_valid_miou", best_valid_miou_ ? json(*best_valid_miou_) : json(nullptr)}};
  std::ofstream out(path.string() + ".json", std::ios::trunc);
  if (!out) throw CheckpointError("cannot write '" + path.string() + ".json'");
  out << meta.dump(2) << "\n";
}

template <typename Scalar>
void Trainer<Scalar>::load_state(const fs::path& path)
{
  std::ifstream in(path.string() + ".json");
  if (!in) throw CheckpointError("missing training-state sidecar '" + path.string() + ".json'");
  json meta;
  try {
    meta = json::parse(in);
  }
  catch (const json::exception& e) {
    throw CheckpointError(std::string("unreadable training-state sidecar: ") + e.what());
  }
  if (meta.value("seed", std::uint64_t{0}) != config_.seed)
    throw CheckpointError("training state was written with a different seed");
  if (meta.value("samples_per_epoch", std::size_t{0}) != samples_.size())
    throw CheckpointError("training state was written for a different training set");

  auto entries = read_archive(path);
  std::map<std::string, const ArchiveEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  auto& store = model_->parameters();
  if (entries.size() != 3 * store.size())
    throw CheckpointError("training state holds " + std::to_string(entries.size()) + " tensors, expected " +
                          std::to_string(3 * store.size()));
  auto fetch = [&](const std::string& name) -> const ArchiveEntry& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("training state lacks '" + name + "'");
    return *it->second;
  };
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store.at(i);
    from_entry(fetch("param/" + p.name), p.shape, p.value);
    from_entry(fetch("adam.m/" + p.name), p.shape, adam_.m[i]);
    from_entry(fetch("adam.v/" + p.name), p.shape, adam_.v[i]);
  }
  adam_.step = meta.at("step").get<long>();
  best_valid_miou_.reset();
  if (meta.contains("best_valid_miou") && !meta["best_valid_miou"].is_null())
    best_valid_miou_ = meta["best_valid_miou"].get<double>();
}

RepeatSummary summarize_repeats(const std::vector<std::uint64_t>& seeds, const std::vector<EvalReport>& reports)
{
  if (seeds.size() != reports.size() || reports.empty())
    throw ValidationError("summarize_repeats: need one report per seed");
  RepeatSummary s;
  s.seeds = seeds;
  s.reports = reports;
  s.mean.n_samples = reports.front().n_samples;
  for (const auto& r : reports) {
    s.mean.miou += r.miou / static_cast<double>(reports.size());
    for (const auto& [m, v] : r.r_at_1) s.mean.r_at_1[m] += v / static_cast<double>(reports.size());
  }
  return s;
}

template void adamw_step<float>(ParameterStore<float>&, AdamState<float>&, const RunConfig&);
template void adamw_step<double>(ParameterStore<double>&, AdamState<double>&, const RunConfig&);
template PredictionSet predict<float>(AvtslModel<float>&, const VideoSample&, const QAInstance&);
template PredictionSet predict<double>(AvtslModel<double>&, const VideoSample&, const QAInstance&);
template EvalReport evaluate_model<float>(AvtslModel<float>&, const Dataset&, Predictor, const std::vector<double>&);
template EvalReport evaluate_model<double>(AvtslModel<double>&, const Dataset&, Predictor,
                                           const std::vector<double>&);
template class Trainer<float>;
template class Trainer<double>;

} // namespace avtsl
