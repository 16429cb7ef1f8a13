#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bento/types.hpp"

namespace bento::io {

/// Interleaved 8-bit image, row-major. channels: 1 = gray, 3 = RGB, 4 = RGBA.
struct ImageU8 {
  int h = 0, w = 0, channels = 0;
  std::vector<uint8_t> pix;

  ImageU8() = default;
  ImageU8(int h_, int w_, int c_) : h(h_), w(w_), channels(c_), pix(size_t(h_) * w_ * c_, 0) {}

  uint8_t& at(int i, int j, int c) { return pix[(size_t(i) * w + j) * channels + c]; }
  uint8_t at(int i, int j, int c) const { return pix[(size_t(i) * w + j) * channels + c]; }
};

namespace detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

inline uint32_t get_u32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) |
         uint32_t(p[3]);
}

inline void put_chunk(std::vector<uint8_t>& out, const char type[4],
                      const std::vector<uint8_t>& payload) {
  put_u32(out, uint32_t(payload.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uint32_t crc =
      ::crc32(0, out.data() + start, uInt(out.size() - start));
  put_u32(out, crc);
}

inline int color_type_for(int channels) {
  switch (channels) {
    case 1: return 0;
    case 3: return 2;
    case 4: return 6;
  }
  throw ValueError("png: unsupported channel count " + std::to_string(channels));
}

inline int channels_for(int color_type) {
  switch (color_type) {
    case 0: return 1;
    case 2: return 3;
    case 6: return 4;
  }
  throw DataError("png: unsupported color type " + std::to_string(color_type));
}

}  // namespace detail

/// Encodes 8-bit PNG with filter 0 on every row; byte-deterministic.
inline std::vector<uint8_t> encode_png(const ImageU8& img) {
  if (img.h < 1 || img.w < 1 || img.pix.size() != size_t(img.h) * img.w * img.channels)
    throw ValueError("png: malformed image buffer");
  const int ch = img.channels;
  detail::color_type_for(ch);

  std::vector<uint8_t> raw;
  raw.reserve(size_t(img.h) * (1 + size_t(img.w) * ch));
  for (int i = 0; i < img.h; ++i) {
    raw.push_back(0);  // filter: none
    const uint8_t* row = img.pix.data() + size_t(i) * img.w * ch;
    raw.insert(raw.end(), row, row + size_t(img.w) * ch);
  }

  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<uint8_t> z(bound);
  if (compress2(z.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
    throw IoError("png: deflate failed");
  z.resize(bound);

  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<uint8_t> ihdr;
  detail::put_u32(ihdr, uint32_t(img.w));
  detail::put_u32(ihdr, uint32_t(img.h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(uint8_t(detail::color_type_for(ch)));
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  detail::put_chunk(out, "IHDR", ihdr);
  detail::put_chunk(out, "IDAT", z);
  detail::put_chunk(out, "IEND", {});
  return out;
}

inline ImageU8 decode_png(const std::vector<uint8_t>& bytes) {
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
    throw DataError("png: bad signature");

  int w = 0, h = 0, ch = 0;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  bool saw_ihdr = false, saw_iend = false;
  while (pos + 8 <= bytes.size()) {
    const uint32_t len = detail::get_u32(bytes.data() + pos);
    if (pos + 12 + len > bytes.size()) throw DataError("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const uint8_t* payload = bytes.data() + pos + 8;
    const uint32_t want_crc = detail::get_u32(payload + len);
    const uint32_t got_crc = ::crc32(0, bytes.data() + pos + 4, uInt(4 + len));
    if (want_crc != got_crc) throw DataError("png: chunk crc mismatch");

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw DataError("png: bad IHDR length");
      w = int(detail::get_u32(payload));
      h = int(detail::get_u32(payload + 4));
      const int depth = payload[8], color = payload[9], interlace = payload[12];
      if (depth != 8) throw DataError("png: only 8-bit depth supported");
      if (interlace != 0) throw DataError("png: interlacing not supported");
      ch = detail::channels_for(color);
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_iend = true;
      break;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr || !saw_iend || w < 1 || h < 1) throw DataError("png: missing chunks");

  const size_t stride = size_t(w) * ch;
  std::vector<uint8_t> raw(size_t(h) * (1 + stride));
  uLongf raw_len = uLongf(raw.size());
  const int zrc = uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size()));
  if (zrc != Z_OK || raw_len != raw.size()) throw DataError("png: inflate failed");

  ImageU8 img(h, w, ch);
  const int bpp = ch;  // bytes per pixel at depth 8
  std::vector<uint8_t> prev(stride, 0);
  for (int i = 0; i < h; ++i) {
    const uint8_t filter = raw[size_t(i) * (1 + stride)];
    const uint8_t* src = raw.data() + size_t(i) * (1 + stride) + 1;
    uint8_t* dst = img.pix.data() + size_t(i) * stride;
    switch (filter) {
      case 0:
        std::memcpy(dst, src, stride);
        break;
      case 1:  // Sub
        for (size_t x = 0; x < stride; ++x)
          dst[x] = uint8_t(src[x] + (x >= size_t(bpp) ? dst[x - bpp] : 0));
        break;
      case 2:  // Up
        for (size_t x = 0; x < stride; ++x) dst[x] = uint8_t(src[x] + prev[x]);
        break;
      case 3:  // Average
        for (size_t x = 0; x < stride; ++x) {
          const int a = x >= size_t(bpp) ? dst[x - bpp] : 0;
          dst[x] = uint8_t(src[x] + (a + prev[x]) / 2);
        }
        break;
      case 4:  // Paeth
        for (size_t x = 0; x < stride; ++x) {
          const int a = x >= size_t(bpp) ? dst[x - bpp] : 0;
          const int b = prev[x];
          const int c = x >= size_t(bpp) ? prev[x - bpp] : 0;
          const int p = a + b - c;
          const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          const int pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          dst[x] = uint8_t(src[x] + pred);
        }
        break;
      default:
        throw DataError("png: unknown filter " + std::to_string(filter));
    }
    std::memcpy(prev.data(), dst, stride);
  }
  return img;
}

inline void write_png(const std::string& path, const ImageU8& img) {
  const auto bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw IoError("short write: " + path);
}

inline ImageU8 read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " in " + path);
  }
}

// ---------------------------------------------------------------------------
// Conversions between the numeric world and 8-bit images.

inline ImageU8 mask_to_image(const Mask& m) {
  ImageU8 img(m.h, m.w, 1);
  for (size_t i = 0; i < m.v.size(); ++i) img.pix[i] = m.v[i] ? 255 : 0;
  return img;
}

inline Mask image_to_mask(const ImageU8& img) {
  if (img.channels != 1) throw DataError("mask png must be grayscale");
  Mask m(img.h, img.w);
  for (size_t i = 0; i < img.pix.size(); ++i) m.v[i] = img.pix[i] >= 128 ? 1 : 0;
  return m;
}

/// Tensor [C,H,W] in [0,1] -> interleaved u8 with round-half-up.
inline ImageU8 tensor_to_image(const Tensor& t) {
  if (t.ndim() != 3 || (t.dim(0) != 1 && t.dim(0) != 3 && t.dim(0) != 4))
    throw ValueError("tensor_to_image: expected [1|3|4,H,W], got " +
                     shape_str(t.shape()));
  const int C = t.dim(0), H = t.dim(1), W = t.dim(2);
  ImageU8 img(H, W, C);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double v = t.at(c, i, j);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        img.at(i, j, c) = uint8_t(v * 255.0 + 0.5);
      }
  return img;
}

inline Tensor image_to_tensor(const ImageU8& img) {
  Tensor t = Tensor::zeros({img.channels, img.h, img.w});
  for (int c = 0; c < img.channels; ++c)
    for (int i = 0; i < img.h; ++i)
      for (int j = 0; j < img.w; ++j) t.at(c, i, j) = img.at(i, j, c) / 255.0;
  return t;
}

}  // namespace bento::io
