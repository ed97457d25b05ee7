// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stagelab/common.hpp"

namespace stagelab {

// STGW container framing, shared by weight archives and dataset caches:
//
//   bytes 0..3   magic "STGW"
//   bytes 4..7   format version, u32 little-endian (currently 1)
//   bytes 8..11  manifest byte length, u32 little-endian
//   ...          manifest, UTF-8 JSON
//   ...          zero padding so the payload starts on a 16-byte boundary
//   ...          payload, raw little-endian scalars
//
// What the manifest contains is up to the owner of the file kind; offsets
// inside it are relative to the payload start.

constexpr std::uint32_t kContainerVersion = 1;
inline constexpr char kContainerMagic[4] = {'S', 'T', 'G', 'W'};

struct RawContainer {
  std::uint32_t version = kContainerVersion;
  std::string manifest;
  std::vector<std::uint8_t> payload;
};

namespace detail {
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
}  // namespace detail

inline std::vector<std::uint8_t> serialize_container(const RawContainer& c) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + c.manifest.size() + 16 + c.payload.size());
  out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
  detail::put_u32(out, c.version);
  detail::put_u32(out, static_cast<std::uint32_t>(c.manifest.size()));
  out.insert(out.end(), c.manifest.begin(), c.manifest.end());
  while (out.size() % 16 != 0) out.push_back(0);
  out.insert(out.end(), c.payload.begin(), c.payload.end());
  return out;
}

inline RawContainer parse_container(const std::vector<std::uint8_t>& bytes,
                                    const std::string& origin) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kContainerMagic, 4) != 0)
    raise(concat(origin, ": not a STGW container"));
  RawContainer c;
  c.version = detail::get_u32(bytes.data() + 4);
  if (c.version != kContainerVersion)
    raise(concat(origin, ": unsupported container version ", c.version));
  const std::uint64_t mlen = detail::get_u32(bytes.data() + 8);
  if (12 + mlen > bytes.size()) raise(concat(origin, ": manifest extends past end of file"));
  c.manifest.assign(bytes.begin() + 12, bytes.begin() + 12 + mlen);
  std::uint64_t payload_off = 12 + mlen;
  payload_off = (payload_off + 15) / 16 * 16;
  if (payload_off > bytes.size()) raise(concat(origin, ": truncated before payload"));
  c.payload.assign(bytes.begin() + payload_off, bytes.end());
  return c;
}

inline void write_container(const std::filesystem::path& path, const RawContainer& c) {
  std::vector<std::uint8_t> bytes = serialize_container(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(concat("cannot open '", path.string(), "' for writing"));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) raise(concat("write failed for '", path.string(), "'"));
}

inline RawContainer read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(concat("cannot open '", path.string(), "'"));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return parse_container(bytes, path.string());
}

}  // namespace stagelab
