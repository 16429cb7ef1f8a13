#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bento/tensor.hpp"

namespace bento::ckpt {

inline constexpr uint32_t kVersion = 1;
inline constexpr uint8_t kDtypeF32 = 0;
inline constexpr uint8_t kDtypeU64 = 1;

struct Entry {
  std::string name;
  uint8_t dtype = kDtypeF32;
  std::vector<uint32_t> dims;
  std::vector<uint8_t> payload;  // little-endian scalars

  size_t count() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

/**
 * Trained state as a flat name -> array map. Parameters are stored as f32
 * (training runs in f64), so resume reproducibility is defined at f32
 * granularity; counters and hashes use the u64 dtype.
 */
struct Checkpoint {
  uint32_t version = kVersion;
  std::vector<Entry> entries;

  const Entry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }

  void add_f32(const std::string& name, const Tensor& t) {
    if (find(name)) throw ValueError("checkpoint: duplicate entry '" + name + "'");
    Entry e;
    e.name = name;
    e.dtype = kDtypeF32;
    for (int d : t.shape()) e.dims.push_back(uint32_t(d));
    e.payload.reserve(size_t(t.size()) * 4);
    for (int64_t i = 0; i < t.size(); ++i) {
      const float f = float(t[i]);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int b = 0; b < 4; ++b) e.payload.push_back(uint8_t(bits >> (8 * b)));
    }
    entries.push_back(std::move(e));
  }

  void add_u64(const std::string& name, uint64_t v) {
    if (find(name)) throw ValueError("checkpoint: duplicate entry '" + name + "'");
    Entry e;
    e.name = name;
    e.dtype = kDtypeU64;
    e.dims = {1};
    for (int b = 0; b < 8; ++b) e.payload.push_back(uint8_t(v >> (8 * b)));
    entries.push_back(std::move(e));
  }

  /// Copies a stored f32 array into `dst`, which fixes the expected shape.
  void read_f32(const std::string& name, const Tensor& dst) const {
    const Entry* e = find(name);
    if (!e) throw DataError("checkpoint: missing entry '" + name + "'");
    if (e->dtype != kDtypeF32)
      throw DataError("checkpoint: entry '" + name + "' has wrong dtype");
    Shape got;
    for (uint32_t d : e->dims) got.push_back(int(d));
    if (got != dst.shape())
      throw DataError("checkpoint: shape mismatch for '" + name + "': file has " +
                      shape_str(got) + ", model expects " + shape_str(dst.shape()));
    for (int64_t i = 0; i < dst.size(); ++i) {
      uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= uint32_t(e->payload[size_t(i) * 4 + b]) << (8 * b);
      float f;
      std::memcpy(&f, &bits, 4);
      dst.data()[size_t(i)] = double(f);
    }
  }

  uint64_t read_u64(const std::string& name) const {
    const Entry* e = find(name);
    if (!e) throw DataError("checkpoint: missing entry '" + name + "'");
    if (e->dtype != kDtypeU64)
      throw DataError("checkpoint: entry '" + name + "' has wrong dtype");
    uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= uint64_t(e->payload[size_t(b)]) << (8 * b);
    return v;
  }
};

namespace detail {

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(uint8_t(v >> (8 * b)));
}

struct Reader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > bytes.size()) throw DataError("checkpoint: truncated file");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = uint16_t(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= uint32_t(bytes[pos + size_t(b)]) << (8 * b);
    pos += 4;
    return v;
  }
  uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::vector<uint8_t> take(size_t n) {
    need(n);
    std::vector<uint8_t> v(bytes.begin() + std::ptrdiff_t(pos),
                           bytes.begin() + std::ptrdiff_t(pos + n));
    pos += n;
    return v;
  }
};

}  // namespace detail

inline std::vector<uint8_t> serialize(const Checkpoint& ck) {
  std::vector<uint8_t> out = {'B', 'N', 'T', '1'};
  detail::put_u32(out, ck.version);
  detail::put_u32(out, uint32_t(ck.entries.size()));
  for (const auto& e : ck.entries) {
    if (e.name.size() > 0xffff) throw ValueError("checkpoint: name too long");
    detail::put_u16(out, uint16_t(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(e.dtype);
    out.push_back(uint8_t(e.dims.size()));
    for (uint32_t d : e.dims) detail::put_u32(out, d);
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  const uint32_t crc = uint32_t(::crc32(0, out.data(), uInt(out.size())));
  detail::put_u32(out, crc);
  return out;
}

inline Checkpoint deserialize(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "BNT1", 4) != 0)
    throw DataError("checkpoint: bad magic");
  if (bytes.size() < 8 + 4 + 4) throw DataError("checkpoint: truncated file");
  const uint32_t stored_crc = uint32_t(bytes[bytes.size() - 4]) |
                              uint32_t(bytes[bytes.size() - 3]) << 8 |
                              uint32_t(bytes[bytes.size() - 2]) << 16 |
                              uint32_t(bytes[bytes.size() - 1]) << 24;
  const uint32_t crc = uint32_t(::crc32(0, bytes.data(), uInt(bytes.size() - 4)));
  if (crc != stored_crc) throw DataError("checkpoint: crc mismatch");

  detail::Reader r{bytes, 4};
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(ck.version));
  const uint32_t count = r.u32();
  const size_t body_end = bytes.size() - 4;
  for (uint32_t i = 0; i < count; ++i) {
    Entry e;
    const uint16_t name_len = r.u16();
    auto name = r.take(name_len);
    e.name.assign(name.begin(), name.end());
    e.dtype = r.u8();
    if (e.dtype != kDtypeF32 && e.dtype != kDtypeU64)
      throw DataError("checkpoint: unknown dtype tag " + std::to_string(e.dtype));
    const uint8_t ndim = r.u8();
    for (uint8_t d = 0; d < ndim; ++d) e.dims.push_back(r.u32());
    const size_t scalar = e.dtype == kDtypeF32 ? 4 : 8;
    e.payload = r.take(e.count() * scalar);
    ck.entries.push_back(std::move(e));
  }
  if (r.pos != body_end) throw DataError("checkpoint: trailing bytes after entries");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto bytes = serialize(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw IoError("short write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " in " + path);
  }
}

// ---------------------------------------------------------------------------
// ParamSet adapters.

inline void pack_params(Checkpoint& ck, const ParamSet& params) {
  for (const auto& [name, p] : params) ck.add_f32(name, p);
}

/// Restores every parameter in `params` from the checkpoint, in place.
inline void unpack_params(const Checkpoint& ck, const ParamSet& params) {
  for (const auto& [name, p] : params) ck.read_f32(name, p);
}

}  // namespace bento::ckpt
