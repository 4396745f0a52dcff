/* Copyright 2026 The ScreamKD Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <zlib.h>

#include <bit>
#include <cstring>

#include "screamkd/fileio.hpp"
#include "screamkd/model.hpp"

namespace screamkd::model {
namespace {

constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kRoleParam = 0;
constexpr std::uint8_t kRoleBuffer = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xFF));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (pos_ + n > in_.size()) throw Error(Errc::ChecksumMismatch, "model file ends prematurely");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto s = take(2);
    return static_cast<std::uint16_t>(s[0] | (s[1] << 8));
  }
  std::uint32_t u32() {
    auto s = take(4);
    return static_cast<std::uint32_t>(s[0]) | (static_cast<std::uint32_t>(s[1]) << 8) |
           (static_cast<std::uint32_t>(s[2]) << 16) | (static_cast<std::uint32_t>(s[3]) << 24);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const NamedTensor& t, std::uint8_t role) {
  w.u16(static_cast<std::uint16_t>(t.name.size()));
  w.bytes(t.name.data(), t.name.size());
  w.u8(role);
  w.u8(static_cast<std::uint8_t>(t.value.ndim()));
  for (std::size_t d : t.value.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (float v : t.value.values()) w.u32(std::bit_cast<std::uint32_t>(v));
}

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
  nlohmann::json meta = model.metadata;
  meta["config"] = config_to_json(model.config);
  meta["frozen"] = model.frozen;
  const std::string meta_text = meta.dump();

  Writer w;
  w.bytes("SKDM", 4);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(model.config.kind));
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(meta_text.size()));
  w.bytes(meta_text.data(), meta_text.size());
  w.u32(static_cast<std::uint32_t>(model.params.size() + model.buffers.size()));
  for (const NamedTensor& t : model.params) write_tensor(w, t, kRoleParam);
  for (const NamedTensor& t : model.buffers) write_tensor(w, t, kRoleBuffer);
  w.u32(crc_of(w.buffer()));
  return std::move(w.buffer());
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "SKDM", 4) != 0) {
    throw Error(Errc::BadMagic, "not an SKDM model file");
  }
  if (bytes.size() < 16) throw Error(Errc::ChecksumMismatch, "model file too short");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (crc_of(body) != tail.u32()) throw Error(Errc::ChecksumMismatch, "CRC32 does not match file contents");

  Reader r(body);
  r.take(4);
  const std::uint8_t version = r.u8();
  if (version != kVersion) throw Error(Errc::VersionMismatch, "SKDM version " + std::to_string(version));
  const std::uint8_t kind = r.u8();
  r.u16();
  const std::uint32_t meta_len = r.u32();
  const auto meta_bytes = r.take(meta_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("model metadata: ") + e.what());
  }

  Model m;
  m.config = config_from_json(meta.at("config"));
  if (static_cast<std::uint8_t>(m.config.kind) != kind) {
    throw Error(Errc::InvalidConfig, "header kind disagrees with metadata");
  }
  m.frozen = meta.value("frozen", false);
  meta.erase("config");
  meta.erase("frozen");
  m.metadata = std::move(meta);

  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint16_t name_len = r.u16();
    const auto name = r.take(name_len);
    t.name.assign(name.begin(), name.end());
    const std::uint8_t role = r.u8();
    const std::uint8_t ndim = r.u8();
    nn::Shape shape(ndim);
    for (auto& d : shape) d = r.u32();
    std::vector<float> values(nn::shape_numel(shape));
    const auto raw = r.take(values.size() * 4);
    for (std::size_t k = 0; k < values.size(); ++k) {
      std::uint32_t u;
      std::memcpy(&u, raw.data() + 4 * k, 4);
      if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
      values[k] = std::bit_cast<float>(u);
    }
    t.value = nn::Tensor(std::move(shape), std::move(values));
    if (role == kRoleParam) {
      m.params.push_back(std::move(t));
    } else if (role == kRoleBuffer) {
      m.buffers.push_back(std::move(t));
    } else {
      throw Error(Errc::InvalidConfig, "unknown tensor role " + std::to_string(role));
    }
  }
  if (!r.done()) throw Error(Errc::InvalidConfig, "trailing bytes after tensor table");
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  write_file(path, serialize_model(model));
}

Model load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

}  // namespace screamkd::model
