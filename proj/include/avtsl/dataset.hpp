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

#include <filesystem>
#include <string>
#include <vector>

#include "avtsl/tensor.hpp"

namespace avtsl {

enum class Modality { Visual, Audio, Textual };
enum class Language { Zh, En };
enum class Split { Train, Valid, Test };
enum class Endpoint { Start, End };

std::string to_string(Modality m);
std::string to_string(Language l);
std::string to_string(Split s);
Language parse_language(const std::string& s);
Split parse_split(const std::string& s);

using FeatureMatrix = Matrix<float>;

// One modality's feature sequence: length x dim values. Visual and audio
// sequences carry the number of seconds covered by one position.
struct FeatureSequence
{
  Modality modality = Modality::Visual;
  FeatureMatrix values;
  double time_step_seconds = 0.0;

  Index length() const { return values.rows(); }
  Index dim() const { return values.cols(); }

  // Throws DataError (tagged with video_id) when an invariant is broken.
  void validate(const std::string& video_id) const;

  bool operator==(const FeatureSequence&) const = default;
};

struct SubtitleToken
{
  int token_index = 0;
  double start_s = 0.0;
  double end_s = 0.0;

  bool operator==(const SubtitleToken&) const = default;
};

// Bidirectional timestamp <-> subtitle-token mapping.
//
// A timestamp maps to the token whose span is nearest: distance 0 inside the
// span, otherwise the gap to the nearest edge. A boundary shared by adjacent
// tokens is resolved by the endpoint being mapped: a span start belongs to
// the token that begins there ([start, end) containment), a span end to the
// token that ends there ((start, end]). Remaining ties go to the earlier
// token. Times in subtitle-free gaps map to the nearest token.
class TimeSpanMap
{
public:
  TimeSpanMap() = default;

  // Validates ordering: sorted, non-overlapping, strictly increasing indices.
  explicit TimeSpanMap(std::vector<SubtitleToken> entries);

  int time_to_token(double t_seconds, Endpoint endpoint = Endpoint::Start) const;
  double token_to_time(int token_index, Endpoint endpoint) const;

  // Nearest present token index to an arbitrary index (ties toward the
  // earlier token). Used for token positions that carry no subtitle span,
  // e.g. question tokens.
  int nearest_token(int token_index) const;

  bool contains(int token_index) const;
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  int first_token() const;
  int last_token() const;
  const std::vector<SubtitleToken>& entries() const { return entries_; }

  bool operator==(const TimeSpanMap&) const = default;

private:
  const SubtitleToken& find(int token_index) const;

  std::vector<SubtitleToken> entries_;
};

struct QAInstance
{
  std::string question_id;
  double gt_start_s = 0.0;
  double gt_end_s = 0.0;
  Language language = Language::En;
  FeatureSequence textual; // question + subtitle tokens

  bool operator==(const QAInstance&) const = default;
};

struct VideoSample
{
  std::string video_id;
  FeatureSequence visual;
  FeatureSequence audio;
  TimeSpanMap tsm;
  std::vector<QAInstance> qa;
  double duration_s = 0.0;

  void validate() const;

  bool operator==(const VideoSample&) const = default;
};

// A loaded and fully validated dataset split.
struct Dataset
{
  int format_version = 1;
  Split split = Split::Train;
  std::vector<VideoSample> videos;

  std::size_t qa_count() const;
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

inline constexpr int kDatasetFormatVersion = 1;

// Reads a manifest and every payload it references. Any invariant violation
// throws; nothing partially loaded is returned. An empty manifest file yields
// an empty dataset.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Writes manifest.json plus per-video payload directories under `dir`.
// Returns the manifest path.
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

std::vector<float> read_f32(const std::filesystem::path& path);
void write_f32(const std::filesystem::path& path, const float* data, std::size_t count);

// Linear interpolation along time onto exactly target_len positions, with
// both endpoints aligned. The result lives on the target grid: its time step
// is source duration / target_len.
FeatureSequence resample_audio_to_video_grid(const FeatureSequence& audio, Index target_len);

// round(t / step) clamped to [0, length - 1].
Index time_to_grid_index(double t_seconds, double step_seconds, Index length);

} // namespace avtsl
