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

#include "avtsl/dataset.hpp"

#include <bit>
#include <cstring>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"

namespace avtsl {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

std::string to_string(Modality m)
{
  switch (m) {
    case Modality::Visual: return "visual";
    case Modality::Audio: return "audio";
    case Modality::Textual: return "textual";
  }
  return "?";
}

std::string to_string(Language l) { return l == Language::Zh ? "zh" : "en"; }

std::string to_string(Split s)
{
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

Language parse_language(const std::string& s)
{
  if (s == "zh") return Language::Zh;
  if (s == "en") return Language::En;
  throw ValidationError("unknown language '" + s + "' (expected zh|en)");
}

Split parse_split(const std::string& s)
{
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw ValidationError("unknown split '" + s + "' (expected train|valid|test)");
}

///////////////////////////////////////////
// FeatureSequence
///////////////////////////////////////////

void FeatureSequence::validate(const std::string& video_id) const
{
  const std::string what = to_string(modality) + " features";
  if (length() < 1 || dim() < 1) throw ShapeMismatchError(video_id, what + " are empty");
  if (!values.allFinite()) throw DataError(video_id, what + " contain non-finite values");
  if (modality == Modality::Textual) {
    if (time_step_seconds != 0.0) throw DataError(video_id, what + " must not carry a time step");
  }
  else if (!(time_step_seconds > 0.0) || !std::isfinite(time_step_seconds)) {
    throw DataError(video_id, what + " need a positive time step");
  }
}

///////////////////////////////////////////
// TimeSpanMap
///////////////////////////////////////////

TimeSpanMap::TimeSpanMap(std::vector<SubtitleToken> entries) : entries_(std::move(entries))
{
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (!(e.start_s >= 0.0) || !(e.end_s >= e.start_s) || !std::isfinite(e.end_s))
      throw ValidationError("subtitle token " + std::to_string(e.token_index) + " has an invalid span [" +
                            std::to_string(e.start_s) + ", " + std::to_string(e.end_s) + "]");
    if (e.token_index < 0)
      throw ValidationError("negative subtitle token index " + std::to_string(e.token_index));
    if (i > 0) {
      const auto& prev = entries_[i - 1];
      if (e.token_index <= prev.token_index)
        throw ValidationError("subtitle token indices not strictly increasing at " + std::to_string(e.token_index));
      if (e.start_s < prev.end_s)
        throw ValidationError("subtitle spans overlap or are unsorted at token " + std::to_string(e.token_index));
    }
  }
}

int TimeSpanMap::time_to_token(double t, Endpoint endpoint) const
{
  if (entries_.empty()) throw MappingError("time_to_token on an empty time-span map");

  const bool start = endpoint == Endpoint::Start;
  auto contains_time = [t, start](const SubtitleToken& e) {
    if (e.start_s == e.end_s) return t == e.start_s;
    return start ? (e.start_s <= t && t < e.end_s) : (e.start_s < t && t <= e.end_s);
  };
  auto distance = [t](const SubtitleToken& e) {
    if (t < e.start_s) return e.start_s - t;
    if (t > e.end_s) return t - e.end_s;
    return 0.0;
  };

  // Spans are sorted, so a linear scan with strict comparisons keeps the
  // earliest token on exact ties.
  std::size_t best = 0;
  double best_dist = distance(entries_[0]);
  bool best_in = contains_time(entries_[0]);
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    double d = distance(entries_[i]);
    bool in = contains_time(entries_[i]);
    if (d < best_dist || (d == best_dist && in && !best_in)) {
      best = i;
      best_dist = d;
      best_in = in;
    }
  }
  return entries_[best].token_index;
}

const SubtitleToken& TimeSpanMap::find(int token_index) const
{
  auto it = std::lower_bound(entries_.begin(), entries_.end(), token_index,
                             [](const SubtitleToken& e, int i) { return e.token_index < i; });
  if (it == entries_.end() || it->token_index != token_index)
    throw MappingError("token " + std::to_string(token_index) + " is not in the time-span map");
  return *it;
}

double TimeSpanMap::token_to_time(int token_index, Endpoint endpoint) const
{
  const auto& e = find(token_index);
  return endpoint == Endpoint::Start ? e.start_s : e.end_s;
}

bool TimeSpanMap::contains(int token_index) const
{
  auto it = std::lower_bound(entries_.begin(), entries_.end(), token_index,
                             [](const SubtitleToken& e, int i) { return e.token_index < i; });
  return it != entries_.end() && it->token_index == token_index;
}

int TimeSpanMap::nearest_token(int token_index) const
{
  if (entries_.empty()) throw MappingError("nearest_token on an empty time-span map");
  auto it = std::lower_bound(entries_.begin(), entries_.end(), token_index,
                             [](const SubtitleToken& e, int i) { return e.token_index < i; });
  if (it == entries_.end()) return entries_.back().token_index;
  if (it->token_index == token_index || it == entries_.begin()) return it->token_index;
  auto prev = std::prev(it);
  return (token_index - prev->token_index) <= (it->token_index - token_index) ? prev->token_index : it->token_index;
}

int TimeSpanMap::first_token() const
{
  if (entries_.empty()) throw MappingError("empty time-span map");
  return entries_.front().token_index;
}

int TimeSpanMap::last_token() const
{
  if (entries_.empty()) throw MappingError("empty time-span map");
  return entries_.back().token_index;
}

///////////////////////////////////////////
// VideoSample / Dataset
///////////////////////////////////////////

void VideoSample::validate() const
{
  if (video_id.empty()) throw DataError("", "video with empty id");
  visual.validate(video_id);
  audio.validate(video_id);
  if (visual.modality != Modality::Visual || audio.modality != Modality::Audio)
    throw DataError(video_id, "modality tags do not match their slots");
  if (!(duration_s > 0.0)) throw DataError(video_id, "duration must be positive");

  double covered = static_cast<double>(visual.length()) * visual.time_step_seconds;
  if (std::abs(covered - duration_s) > visual.time_step_seconds + 1e-9)
    throw ShapeMismatchError(video_id, "visual length x time step (" + std::to_string(covered) +
                                         " s) disagrees with duration " + std::to_string(duration_s) + " s");
  if (!tsm.empty() && tsm.entries().back().end_s > duration_s + 1e-9)
    throw SubtitleOrderError(video_id, "subtitle spans extend past the video duration");

  std::set<std::string> ids;
  for (const auto& q : qa) {
    if (q.question_id.empty()) throw DataError(video_id, "question with empty id");
    if (!ids.insert(q.question_id).second) throw DataError(video_id, "duplicate question id '" + q.question_id + "'");
    if (!(q.gt_start_s >= 0.0 && q.gt_start_s < q.gt_end_s && q.gt_end_s <= duration_s + 1e-9))
      throw DataError(video_id, "question '" + q.question_id + "' has an invalid ground-truth span");
    if (q.textual.modality != Modality::Textual)
      throw DataError(video_id, "question '" + q.question_id + "' textual features mis-tagged");
    q.textual.validate(video_id);
    if (!tsm.empty() && tsm.last_token() >= q.textual.length())
      throw ShapeMismatchError(video_id, "question '" + q.question_id + "' has " +
                                           std::to_string(q.textual.length()) +
                                           " tokens but subtitles reference token " +
                                           std::to_string(tsm.last_token()));
  }
}

std::size_t Dataset::qa_count() const
{
  std::size_t n = 0;
  for (const auto& v : videos) n += v.qa.size();
  return n;
}

void Dataset::validate() const
{
  std::set<std::string> ids;
  for (const auto& v : videos) {
    v.validate();
    if (!ids.insert(v.video_id).second) throw DataError(v.video_id, "duplicate video id");
  }
}

///////////////////////////////////////////
// Payload I/O
///////////////////////////////////////////

std::vector<float> read_f32(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("", "cannot open payload '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % sizeof(float) != 0)
    throw ShapeMismatchError("", "payload '" + path.string() + "' size is not a multiple of 4 bytes");
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

void write_f32(const fs::path& path, const float* data, std::size_t count)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("", "cannot write payload '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
}

namespace {

std::string format_double(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

FeatureSequence load_sequence(const fs::path& base, const std::string& video_id, Modality modality,
                              const std::string& rel_path, Index length, Index dim, double step)
{
  fs::path path = base / rel_path;
  if (!fs::exists(path)) throw MissingFileError(video_id, "missing payload '" + path.string() + "'");
  if (length < 1 || dim < 1)
    throw ShapeMismatchError(video_id, to_string(modality) + " shape must be positive in '" + rel_path + "'");
  std::vector<float> data;
  try {
    data = read_f32(path);
  }
  catch (const DataError& e) {
    throw ShapeMismatchError(video_id, e.what());
  }
  if (data.size() != static_cast<std::size_t>(length * dim))
    throw ShapeMismatchError(video_id, "payload '" + rel_path + "' has " + std::to_string(data.size()) +
                                         " values, expected " + std::to_string(length) + "x" + std::to_string(dim));
  FeatureSequence seq;
  seq.modality = modality;
  seq.values = Eigen::Map<FeatureMatrix>(data.data(), length, dim);
  seq.time_step_seconds = step;
  return seq;
}

std::vector<std::vector<std::string>> read_table(const fs::path& path, const std::string& video_id,
                                                 std::size_t columns)
{
  std::ifstream in(path);
  if (!in) throw MissingFileError(video_id, "missing table '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != columns)
      throw DataError(video_id, "table '" + path.filename().string() + "' row has " + std::to_string(fields.size()) +
                                  " fields, expected " + std::to_string(columns));
    rows.push_back(std::move(fields));
  }
  return rows;
}

double parse_double(const std::string& s, const std::string& video_id)
{
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  }
  catch (const std::exception&) {
    throw DataError(video_id, "malformed number '" + s + "'");
  }
}

long parse_int(const std::string& s, const std::string& video_id)
{
  try {
    std::size_t used = 0;
    long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  }
  catch (const std::exception&) {
    throw DataError(video_id, "malformed integer '" + s + "'");
  }
}

template <typename T>
T field(const json& j, const char* key, const std::string& video_id)
{
  if (!j.contains(key)) throw DataError(video_id, std::string("manifest entry lacks '") + key + "'");
  try {
    return j.at(key).get<T>();
  }
  catch (const json::exception&) {
    throw DataError(video_id, std::string("manifest field '") + key + "' has the wrong type");
  }
}

} // namespace

Dataset load_dataset(const fs::path& manifest_path)
{
  std::ifstream in(manifest_path);
  if (!in) throw MissingFileError("", "cannot open manifest '" + manifest_path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Dataset ds;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return ds;

  json root;
  try {
    root = json::parse(text);
  }
  catch (const json::parse_error& e) {
    throw DataError("", "manifest '" + manifest_path.string() + "' is not valid JSON: " + e.what());
  }
  ds.format_version = root.value("format_version", kDatasetFormatVersion);
  if (ds.format_version != kDatasetFormatVersion)
    throw DataError("", "unsupported dataset format version " + std::to_string(ds.format_version));
  ds.split = parse_split(root.value("split", std::string("train")));

  const fs::path base = manifest_path.parent_path();
  for (const auto& entry : root.value("videos", json::array())) {
    VideoSample v;
    v.video_id = field<std::string>(entry, "video_id", "");
    const auto& id = v.video_id;
    v.duration_s = field<double>(entry, "duration_s", id);

    const auto& vis = entry.at("visual");
    v.visual = load_sequence(base, id, Modality::Visual, field<std::string>(vis, "path", id),
                             field<Index>(vis, "length", id), field<Index>(vis, "dim", id),
                             field<double>(vis, "time_step_seconds", id));
    const auto& aud = entry.at("audio");
    v.audio = load_sequence(base, id, Modality::Audio, field<std::string>(aud, "path", id),
                            field<Index>(aud, "length", id), field<Index>(aud, "dim", id),
                            field<double>(aud, "time_step_seconds", id));

    std::vector<SubtitleToken> tokens;
    for (const auto& row : read_table(base / field<std::string>(entry, "subtitles", id), id, 3)) {
      tokens.push_back({static_cast<int>(parse_int(row[0], id)), parse_double(row[1], id), parse_double(row[2], id)});
    }
    try {
      v.tsm = TimeSpanMap(std::move(tokens));
    }
    catch (const ValidationError& e) {
      throw SubtitleOrderError(id, e.what());
    }

    Index text_dim = field<Index>(entry, "text_dim", id);
    for (const auto& row : read_table(base / field<std::string>(entry, "qa", id), id, 6)) {
      QAInstance q;
      q.question_id = row[0];
      q.gt_start_s = parse_double(row[1], id);
      q.gt_end_s = parse_double(row[2], id);
      try {
        q.language = parse_language(row[3]);
      }
      catch (const ValidationError& e) {
        throw DataError(id, e.what());
      }
      q.textual = load_sequence(base, id, Modality::Textual, row[4], parse_int(row[5], id), text_dim, 0.0);
      v.qa.push_back(std::move(q));
    }
    ds.videos.push_back(std::move(v));
  }
  ds.validate();
  return ds;
}

fs::path write_dataset(const Dataset& dataset, const fs::path& dir)
{
  dataset.validate();
  fs::create_directories(dir);
  json root;
  root["format_version"] = dataset.format_version;
  root["split"] = to_string(dataset.split);
  root["videos"] = json::array();

  for (const auto& v : dataset.videos) {
    fs::path vdir = dir / v.video_id;
    fs::create_directories(vdir);
    write_f32(vdir / "visual.f32", v.visual.values.data(), v.visual.values.size());
    write_f32(vdir / "audio.f32", v.audio.values.data(), v.audio.values.size());

    {
      std::ofstream subs(vdir / "subtitles.tsv");
      subs << "token_index\tstart_s\tend_s\n";
      for (const auto& t : v.tsm.entries())
        subs << t.token_index << '\t' << format_double(t.start_s) << '\t' << format_double(t.end_s) << '\n';
    }

    Index text_dim = v.qa.empty() ? 1 : v.qa.front().textual.dim();
    {
      std::ofstream qa(vdir / "qa.tsv");
      qa << "question_id\tgt_start_s\tgt_end_s\tlanguage\ttext_path\ttext_length\n";
      for (const auto& q : v.qa) {
        if (q.textual.dim() != text_dim)
          throw ShapeMismatchError(v.video_id, "questions disagree on textual feature dim");
        std::string rel = v.video_id + "/text_" + q.question_id + ".f32";
        write_f32(dir / rel, q.textual.values.data(), q.textual.values.size());
        qa << q.question_id << '\t' << format_double(q.gt_start_s) << '\t' << format_double(q.gt_end_s) << '\t'
           << to_string(q.language) << '\t' << rel << '\t' << q.textual.length() << '\n';
      }
    }

    json e;
    e["video_id"] = v.video_id;
    e["duration_s"] = v.duration_s;
    e["visual"] = {{"path", v.video_id + "/visual.f32"},
                   {"length", v.visual.length()},
                   {"dim", v.visual.dim()},
                   {"time_step_seconds", v.visual.time_step_seconds}};
    e["audio"] = {{"path", v.video_id + "/audio.f32"},
                  {"length", v.audio.length()},
                  {"dim", v.audio.dim()},
                  {"time_step_seconds", v.audio.time_step_seconds}};
    e["subtitles"] = v.video_id + "/subtitles.tsv";
    e["qa"] = v.video_id + "/qa.tsv";
    e["text_dim"] = text_dim;
    root["videos"].push_back(std::move(e));
  }

  fs::path manifest = dir / "manifest.json";
  std::ofstream out(manifest);
  out << root.dump(2) << '\n';
  return manifest;
}

///////////////////////////////////////////
// Grid helpers
///////////////////////////////////////////

FeatureSequence resample_audio_to_video_grid(const FeatureSequence& audio, Index target_len)
{
  if (target_len < 1) throw ConfigError("resample: target length must be >= 1");
  if (audio.length() < 1) throw DimensionError("resample: empty source sequence");

  Index src = audio.length();
  FeatureSequence out;
  out.modality = audio.modality;
  out.time_step_seconds = audio.time_step_seconds * static_cast<double>(src) / static_cast<double>(target_len);
  if (target_len == src) {
    out.values = audio.values;
    return out;
  }
  out.values.resize(target_len, audio.dim());
  for (Index i = 0; i < target_len; ++i) {
    double pos = target_len == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(src - 1) / (target_len - 1);
    Index lo = static_cast<Index>(std::floor(pos));
    Index hi = std::min(lo + 1, src - 1);
    float w = static_cast<float>(pos - static_cast<double>(lo));
    auto a = audio.values.row(lo).array();
    auto b = audio.values.row(hi).array();
    // Clamp so rounding never leaves the [a, b] interval.
    out.values.row(i) = (a + w * (b - a)).max(a.min(b)).min(a.max(b)).matrix();
  }
  return out;
}

Index time_to_grid_index(double t_seconds, double step_seconds, Index length)
{
  if (!(step_seconds > 0.0)) throw ConfigError("grid step must be positive");
  if (length < 1) throw ConfigError("grid length must be >= 1");
  double idx = std::round(t_seconds / step_seconds);
  if (idx < 0) return 0;
  if (idx > static_cast<double>(length - 1)) return length - 1;
  return static_cast<Index>(idx);
}

} // namespace avtsl
