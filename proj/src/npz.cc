/*
 * Copyright 2026 The weakdis Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "weakdis/npz.h"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace weakdis {
namespace {

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint64_t le64(const std::uint8_t* p) {
  return static_cast<std::uint64_t>(le32(p)) |
         (static_cast<std::uint64_t>(le32(p + 4)) << 32);
}

constexpr std::uint32_t kLocalHeaderSig = 0x04034b50;
constexpr std::uint32_t kCentralHeaderSig = 0x02014b50;
constexpr std::uint32_t kEndOfCentralDirSig = 0x06054b50;
constexpr std::uint32_t kZip64EndSig = 0x06064b50;
constexpr std::uint32_t kZip64LocatorSig = 0x07064b50;

struct ZipEntry {
  std::string name;
  std::uint16_t method = 0;
  std::uint64_t compressed_size = 0;
  std::uint64_t uncompressed_size = 0;
  std::uint64_t local_offset = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error("malformed npz archive: " + what);
}

std::vector<ZipEntry> read_central_directory(
    const std::vector<std::uint8_t>& buf) {
  require(buf.size() >= 22, "too short");
  std::size_t eocd = std::string::npos;
  const std::size_t lowest = buf.size() > 65557 ? buf.size() - 65557 : 0;
  for (std::size_t i = buf.size() - 22 + 1; i-- > lowest;) {
    if (le32(&buf[i]) == kEndOfCentralDirSig) {
      eocd = i;
      break;
    }
  }
  require(eocd != std::string::npos, "end of central directory not found");
  std::uint64_t count = le16(&buf[eocd + 10]);
  std::uint64_t cd_offset = le32(&buf[eocd + 16]);
  if (eocd >= 20 && le32(&buf[eocd - 20]) == kZip64LocatorSig) {
    const std::uint64_t z64 = le64(&buf[eocd - 20 + 8]);
    require(z64 + 56 <= buf.size() && le32(&buf[z64]) == kZip64EndSig,
            "bad zip64 end record");
    count = le64(&buf[z64 + 32]);
    cd_offset = le64(&buf[z64 + 48]);
  }

  std::vector<ZipEntry> entries;
  std::size_t p = cd_offset;
  for (std::uint64_t e = 0; e < count; ++e) {
    require(p + 46 <= buf.size() && le32(&buf[p]) == kCentralHeaderSig,
            "bad central header");
    ZipEntry entry;
    entry.method = le16(&buf[p + 10]);
    entry.compressed_size = le32(&buf[p + 20]);
    entry.uncompressed_size = le32(&buf[p + 24]);
    const std::uint16_t name_len = le16(&buf[p + 28]);
    const std::uint16_t extra_len = le16(&buf[p + 30]);
    const std::uint16_t comment_len = le16(&buf[p + 32]);
    entry.local_offset = le32(&buf[p + 42]);
    require(p + 46 + name_len + extra_len <= buf.size(), "truncated entry");
    entry.name.assign(reinterpret_cast<const char*>(&buf[p + 46]), name_len);

    // zip64 extended information replaces saturated 32-bit fields in order.
    std::size_t x = p + 46 + name_len;
    const std::size_t x_end = x + extra_len;
    while (x + 4 <= x_end) {
      const std::uint16_t id = le16(&buf[x]);
      const std::uint16_t len = le16(&buf[x + 2]);
      if (id == 0x0001) {
        std::size_t f = x + 4;
        if (entry.uncompressed_size == 0xFFFFFFFFu) {
          entry.uncompressed_size = le64(&buf[f]);
          f += 8;
        }
        if (entry.compressed_size == 0xFFFFFFFFu) {
          entry.compressed_size = le64(&buf[f]);
          f += 8;
        }
        if (entry.local_offset == 0xFFFFFFFFu) entry.local_offset = le64(&buf[f]);
      }
      x += 4 + len;
    }
    entries.push_back(std::move(entry));
    p += 46 + name_len + extra_len + comment_len;
  }
  return entries;
}

std::vector<std::uint8_t> extract(const std::vector<std::uint8_t>& buf,
                                  const ZipEntry& entry) {
  const std::size_t h = entry.local_offset;
  require(h + 30 <= buf.size() && le32(&buf[h]) == kLocalHeaderSig,
          "bad local header for " + entry.name);
  const std::size_t data =
      h + 30 + le16(&buf[h + 26]) + le16(&buf[h + 28]);
  require(data + entry.compressed_size <= buf.size(),
          "truncated data for " + entry.name);

  std::vector<std::uint8_t> out(entry.uncompressed_size);
  if (entry.method == 0) {
    std::memcpy(out.data(), &buf[data], out.size());
    return out;
  }
  require(entry.method == 8, "unsupported compression method");

  z_stream zs{};
  require(inflateInit2(&zs, -MAX_WBITS) == Z_OK, "inflateInit2 failed");
  // zlib counts in uInt; feed large members in slices.
  std::uint64_t in_left = entry.compressed_size;
  std::uint64_t out_left = out.size();
  zs.next_in = const_cast<Bytef*>(&buf[data]);
  zs.next_out = out.data();
  int rc = Z_OK;
  while (rc == Z_OK) {
    if (zs.avail_in == 0) {
      zs.avail_in = static_cast<uInt>(std::min<std::uint64_t>(in_left, 1u << 30));
      in_left -= zs.avail_in;
    }
    if (zs.avail_out == 0) {
      zs.avail_out = static_cast<uInt>(std::min<std::uint64_t>(out_left, 1u << 30));
      out_left -= zs.avail_out;
    }
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc == Z_BUF_ERROR && zs.avail_in == 0 && in_left == 0) break;
  }
  inflateEnd(&zs);
  require(rc == Z_STREAM_END, "inflate failed for " + entry.name);
  return out;
}

std::string header_value(const std::string& header, const std::string& key) {
  const auto k = header.find("'" + key + "'");
  require(k != std::string::npos, "npy header lacks " + key);
  auto v = header.find(':', k);
  require(v != std::string::npos, "npy header malformed");
  ++v;
  while (v < header.size() && header[v] == ' ') ++v;
  if (header[v] == '\'') {
    const auto end = header.find('\'', v + 1);
    return header.substr(v + 1, end - v - 1);
  }
  if (header[v] == '(') {
    const auto end = header.find(')', v);
    return header.substr(v + 1, end - v - 1);
  }
  auto end = header.find_first_of(",}", v);
  return header.substr(v, end - v);
}

}  // namespace

std::int64_t NpyArray::num_elements() const {
  std::int64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

int NpyArray::item_size() const {
  require(dtype.size() >= 3, "bad dtype " + dtype);
  return std::stoi(dtype.substr(2));
}

std::int64_t NpyArray::int_at(std::int64_t i) const {
  const int size = item_size();
  const char kind = dtype[1];
  const std::uint8_t* p = data.data() + i * size;
  require(dtype[0] != '>' || size == 1, "big-endian arrays are not supported");
  if (kind == 'u' || kind == 'b') {
    switch (size) {
      case 1: return p[0];
      case 2: return le16(p);
      case 4: return le32(p);
      case 8: return static_cast<std::int64_t>(le64(p));
    }
  } else if (kind == 'i') {
    switch (size) {
      case 1: return static_cast<std::int8_t>(p[0]);
      case 2: return static_cast<std::int16_t>(le16(p));
      case 4: return static_cast<std::int32_t>(le32(p));
      case 8: return static_cast<std::int64_t>(le64(p));
    }
  }
  throw std::runtime_error("npy dtype " + dtype + " is not an integer type");
}

NpyArray parse_npy(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 10 && bytes[0] == 0x93 &&
              std::memcmp(&bytes[1], "NUMPY", 5) == 0,
          "bad npy magic");
  const int major = bytes[6];
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = le16(&bytes[8]);
    offset = 10;
  } else {
    require(bytes.size() >= 12, "bad npy header");
    header_len = le32(&bytes[8]);
    offset = 12;
  }
  require(offset + header_len <= bytes.size(), "truncated npy header");
  const std::string header(reinterpret_cast<const char*>(&bytes[offset]),
                           header_len);

  NpyArray array;
  array.dtype = header_value(header, "descr");
  array.fortran_order = header_value(header, "fortran_order") == "True";
  const std::string shape = header_value(header, "shape");
  std::size_t pos = 0;
  while (pos < shape.size()) {
    const auto next = shape.find(',', pos);
    std::string token = shape.substr(pos, next - pos);
    token.erase(std::remove(token.begin(), token.end(), ' '), token.end());
    if (!token.empty()) array.shape.push_back(std::stoll(token));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  const std::size_t data_bytes =
      static_cast<std::size_t>(array.num_elements()) * array.item_size();
  require(offset + header_len + data_bytes <= bytes.size(),
          "npy payload shorter than its shape");
  array.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset + header_len),
                    bytes.begin() + static_cast<std::ptrdiff_t>(offset + header_len + data_bytes));
  return array;
}

std::map<std::string, NpyArray> read_npz(const std::filesystem::path& path,
                                         const std::vector<std::string>& keys) {
  const auto buf = read_file(path);
  std::map<std::string, NpyArray> out;
  for (const auto& entry : read_central_directory(buf)) {
    std::string key = entry.name;
    if (key.size() > 4 && key.ends_with(".npy")) key.resize(key.size() - 4);
    if (!keys.empty() &&
        std::find(keys.begin(), keys.end(), key) == keys.end()) {
      continue;
    }
    out.emplace(key, parse_npy(extract(buf, entry)));
  }
  return out;
}

}  // namespace weakdis
