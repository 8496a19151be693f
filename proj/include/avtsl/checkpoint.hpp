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
#include <string>
#include <type_traits>
#include <vector>

#include "avtsl/tensor.hpp"

namespace avtsl {

// Binary tensor archive:
//   "AVTS" | u16 version | u32 manifest bytes | manifest | payloads
// manifest: u32 count, then per entry u16 name length, name, u8 dtype,
// u8 rank, rank x u32 dims. Payloads are raw little-endian scalars in
// manifest order.
inline constexpr char kCheckpointMagic[4] = {'A', 'V', 'T', 'S'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

struct ArchiveEntry
{
  std::string name;
  DType dtype = DType::F32;
  std::vector<Index> shape;
  std::vector<double> values; // widened for transport; f32 entries round-trip exactly
};

void write_archive(const std::filesystem::path& path, const std::vector<ArchiveEntry>& entries);
std::vector<ArchiveEntry> read_archive(const std::filesystem::path& path);

template <typename Scalar>
constexpr DType dtype_of()
{
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
  return std::is_same_v<Scalar, float> ? DType::F32 : DType::F64;
}

template <typename Scalar>
ArchiveEntry to_entry(std::string name, const std::vector<Index>& shape, const Matrix<Scalar>& m)
{
  ArchiveEntry e;
  e.name = std::move(name);
  e.dtype = dtype_of<Scalar>();
  e.shape = shape;
  e.values.assign(m.data(), m.data() + m.size());
  return e;
}

template <typename Scalar>
void from_entry(const ArchiveEntry& e, const std::vector<Index>& shape, Matrix<Scalar>& m)
{
  if (e.shape != shape) {
    std::string want, got;
    for (auto d : shape) want += std::to_string(d) + ",";
    for (auto d : e.shape) got += std::to_string(d) + ",";
    throw CheckpointError("shape mismatch for '" + e.name + "': checkpoint [" + got + "] vs model [" + want + "]");
  }
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(e.values[i]);
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<Scalar>& store)
{
  std::vector<ArchiveEntry> entries;
  entries.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store.at(i);
    entries.push_back(to_entry<Scalar>(p.name, p.shape, p.value));
  }
  write_archive(path, entries);
}

// Every model parameter must be present with an identical shape; extra
// archive entries are an error as well.
template <typename Scalar>
void load_checkpoint(const std::filesystem::path& path, ParameterStore<Scalar>& store)
{
  auto entries = read_archive(path);
  if (entries.size() != store.size())
    throw CheckpointError("checkpoint has " + std::to_string(entries.size()) + " tensors, model has " +
                          std::to_string(store.size()));
  for (const auto& e : entries) {
    auto* p = store.find(e.name);
    if (!p) throw CheckpointError("checkpoint tensor '" + e.name + "' has no matching model parameter");
    from_entry(e, p->shape, p->value);
  }
}

} // namespace avtsl
