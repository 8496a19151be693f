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

#include "avtsl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace avtsl {

namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

class Writer
{
public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { raw(&v, sizeof v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void raw(const void* p, std::size_t n)
  {
    auto c = static_cast<const char*>(p);
    bytes_.insert(bytes_.end(), c, c + n);
  }
  const std::vector<char>& bytes() const { return bytes_; }

private:
  std::vector<char> bytes_;
};

class Reader
{
public:
  Reader(const std::vector<char>& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  std::uint8_t u8() { std::uint8_t v; raw(&v, sizeof v); return v; }
  std::uint16_t u16() { std::uint16_t v; raw(&v, sizeof v); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }

  void raw(void* out, std::size_t n)
  {
    if (pos_ + n > bytes_.size()) throw CheckpointError(path_ + ": truncated archive");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  const std::vector<char>& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::size_t element_count(const std::vector<Index>& shape)
{
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

} // namespace

void write_archive(const std::filesystem::path& path, const std::vector<ArchiveEntry>& entries)
{
  Writer manifest;
  manifest.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xffff) throw CheckpointError("tensor name too long: " + e.name);
    if (e.shape.size() > 0xff) throw CheckpointError("tensor rank too large: " + e.name);
    if (element_count(e.shape) != e.values.size())
      throw CheckpointError("tensor '" + e.name + "' payload does not match its shape");
    manifest.u16(static_cast<std::uint16_t>(e.name.size()));
    manifest.raw(e.name.data(), e.name.size());
    manifest.u8(static_cast<std::uint8_t>(e.dtype));
    manifest.u8(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) manifest.u32(static_cast<std::uint32_t>(d));
  }

  Writer out;
  out.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  out.u16(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(manifest.bytes().size()));
  out.raw(manifest.bytes().data(), manifest.bytes().size());
  for (const auto& e : entries) {
    if (e.dtype == DType::F32) {
      for (double v : e.values) {
        float f = static_cast<float>(v);
        out.raw(&f, sizeof f);
      }
    }
    else {
      out.raw(e.values.data(), e.values.size() * sizeof(double));
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  file.write(out.bytes().data(), static_cast<std::streamsize>(out.bytes().size()));
  if (!file) throw CheckpointError("write failed for '" + path.string() + "'");
}

std::vector<ArchiveEntry> read_archive(const std::filesystem::path& path)
{
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  Reader in(bytes, path.string());
  char magic[4];
  in.raw(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw CheckpointError(path.string() + ": not an AVTS archive");
  auto version = in.u16();
  if (version != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported archive version " + std::to_string(version));
  auto manifest_bytes = in.u32();
  std::size_t manifest_end = in.pos() + manifest_bytes;

  std::vector<ArchiveEntry> entries(in.u32());
  for (auto& e : entries) {
    std::uint16_t len = in.u16();
    e.name.resize(len);
    in.raw(e.name.data(), len);
    auto dtype = in.u8();
    if (dtype > 1) throw CheckpointError(path.string() + ": unknown dtype for '" + e.name + "'");
    e.dtype = static_cast<DType>(dtype);
    e.shape.resize(in.u8());
    for (auto& d : e.shape) d = in.u32();
  }
  if (in.pos() != manifest_end) throw CheckpointError(path.string() + ": manifest length mismatch");

  for (auto& e : entries) {
    std::size_t n = element_count(e.shape);
    e.values.resize(n);
    if (e.dtype == DType::F32) {
      for (std::size_t i = 0; i < n; ++i) {
        float f;
        in.raw(&f, sizeof f);
        e.values[i] = f;
      }
    }
    else {
      in.raw(e.values.data(), n * sizeof(double));
    }
  }
  if (in.remaining() != 0) throw CheckpointError(path.string() + ": trailing bytes after payloads");
  return entries;
}

} // namespace avtsl
