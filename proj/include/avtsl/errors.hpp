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

#include <stdexcept>
#include <string>

namespace avtsl {

struct Error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
struct DimensionError : Error { using Error::Error; };

// Misuse of an API precondition (non-scalar loss, foreign tape, ...).
struct ContractError : Error { using Error::Error; };

// Invalid hyperparameter or layer configuration.
struct ConfigError : Error { using Error::Error; };

struct IndexError : Error { using Error::Error; };

// Input data failed validation (non-normalized targets, bad spans, ...).
struct ValidationError : Error { using Error::Error; };

// NaN or Inf produced during a forward computation.
struct NumericError : Error { using Error::Error; };

// Timestamp/token conversion failure.
struct MappingError : Error { using Error::Error; };

struct CheckpointError : Error { using Error::Error; };

// Dataset loading failure. what() carries the video id when known.
struct DataError : Error
{
  DataError(const std::string& video_id, const std::string& message)
    : Error(video_id.empty() ? message : "video '" + video_id + "': " + message), video_id(video_id)
  {
  }
  std::string video_id;
};

struct MissingFileError : DataError { using DataError::DataError; };
struct ShapeMismatchError : DataError { using DataError::DataError; };
struct SubtitleOrderError : DataError { using DataError::DataError; };

} // namespace avtsl
