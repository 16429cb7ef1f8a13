#include "doctest.h"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bento/image_io.hpp"
#include "bento/rng.hpp"

using namespace bento;

namespace {

io::ImageU8 random_image(int h, int w, int ch, uint64_t seed) {
  io::ImageU8 img(h, w, ch);
  Rng rng(seed);
  for (auto& p : img.pix) p = uint8_t(rng.uniform_int(0, 255));
  return img;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

void put_chunk(std::vector<uint8_t>& out, const char* type,
               const std::vector<uint8_t>& payload) {
  put_u32(out, uint32_t(payload.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uint32_t crc =
      uint32_t(::crc32(0, out.data() + start, uInt(out.size() - start)));
  put_u32(out, crc);
}

/// PNG container around caller-supplied (already filtered) scanline bytes.
std::vector<uint8_t> wrap_png(int w, int h, uint8_t color_type, uint8_t depth,
                              uint8_t interlace, const std::vector<uint8_t>& raw) {
  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<uint8_t> ihdr;
  put_u32(ihdr, uint32_t(w));
  put_u32(ihdr, uint32_t(h));
  ihdr.push_back(depth);
  ihdr.push_back(color_type);
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(interlace);
  put_chunk(out, "IHDR", ihdr);

  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<uint8_t> z(bound);
  REQUIRE(compress2(z.data(), &bound, raw.data(), uLong(raw.size()), 6) == Z_OK);
  z.resize(bound);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return uint8_t(a);
  if (pb <= pc) return uint8_t(b);
  return uint8_t(c);
}

/// Forward-filters one image, cycling through all five filter types by row.
std::vector<uint8_t> filter_all_types(const io::ImageU8& img) {
  const int bpp = img.channels;
  const size_t stride = size_t(img.w) * bpp;
  std::vector<uint8_t> raw;
  for (int i = 0; i < img.h; ++i) {
    const uint8_t ft = uint8_t(i % 5);
    raw.push_back(ft);
    for (size_t x = 0; x < stride; ++x) {
      const int cur = img.pix[size_t(i) * stride + x];
      const int left = x >= size_t(bpp) ? img.pix[size_t(i) * stride + x - bpp] : 0;
      const int up = i > 0 ? img.pix[size_t(i - 1) * stride + x] : 0;
      const int ul = (i > 0 && x >= size_t(bpp))
                         ? img.pix[size_t(i - 1) * stride + x - bpp]
                         : 0;
      int enc = cur;
      switch (ft) {
        case 0: enc = cur; break;
        case 1: enc = cur - left; break;
        case 2: enc = cur - up; break;
        case 3: enc = cur - (left + up) / 2; break;
        case 4: enc = cur - paeth(left, up, ul); break;
      }
      raw.push_back(uint8_t(enc & 0xff));
    }
  }
  return raw;
}

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / "bento_io_test";
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("png round trip preserves every byte for gray, rgb and rgba") {
  int idx = 0;
  for (int ch : {1, 3, 4}) {
    io::ImageU8 img = random_image(13, 17, ch, 100 + uint64_t(idx++));
    auto bytes = io::encode_png(img);
    io::ImageU8 back = io::decode_png(bytes);
    CHECK(back.h == img.h);
    CHECK(back.w == img.w);
    CHECK(back.channels == img.channels);
    CHECK(back.pix == img.pix);
  }
}

TEST_CASE("png encoding is deterministic") {
  io::ImageU8 img = random_image(9, 9, 3, 7);
  CHECK(io::encode_png(img) == io::encode_png(img));
}

TEST_CASE("decoder inverts all five scanline filters") {
  for (int ch : {1, 3, 4}) {
    io::ImageU8 img = random_image(11, 6, ch, 40 + uint64_t(ch));
    const uint8_t color_type = ch == 1 ? 0 : (ch == 3 ? 2 : 6);
    auto bytes = wrap_png(img.w, img.h, color_type, 8, 0, filter_all_types(img));
    io::ImageU8 back = io::decode_png(bytes);
    CHECK(back.pix == img.pix);
  }
}

TEST_CASE("decoder rejects malformed input") {
  io::ImageU8 img = random_image(8, 8, 3, 1);
  auto good = io::encode_png(img);

  SUBCASE("bad signature") {
    auto bad = good;
    bad[1] = 'Q';
    CHECK_THROWS_AS(io::decode_png(bad), DataError);
  }
  SUBCASE("truncated stream") {
    auto bad = good;
    bad.resize(bad.size() - 9);
    CHECK_THROWS_AS(io::decode_png(bad), DataError);
  }
  SUBCASE("corrupted chunk payload fails the crc") {
    auto bad = good;
    const uint8_t tag[4] = {'I', 'D', 'A', 'T'};
    size_t at = 0;
    for (size_t i = 8; i + 4 <= bad.size(); ++i)
      if (std::memcmp(&bad[i], tag, 4) == 0) {
        at = i;
        break;
      }
    REQUIRE(at != 0);
    bad[at + 6] ^= 0xff;
    CHECK_THROWS_AS(io::decode_png(bad), DataError);
  }
  SUBCASE("16 bit depth unsupported") {
    std::vector<uint8_t> raw(size_t(2) * (1 + 2 * 2 * 3), 0);
    auto bytes = wrap_png(2, 2, 2, 16, 0, raw);
    CHECK_THROWS_AS(io::decode_png(bytes), DataError);
  }
  SUBCASE("interlaced images unsupported") {
    io::ImageU8 tiny = random_image(2, 2, 3, 2);
    auto bytes = wrap_png(2, 2, 2, 8, 1, filter_all_types(tiny));
    CHECK_THROWS_AS(io::decode_png(bytes), DataError);
  }
  SUBCASE("empty buffer") {
    CHECK_THROWS_AS(io::decode_png({}), DataError);
  }
}

TEST_CASE("file round trip and path reporting") {
  auto dir = temp_dir();
  auto path = (dir / "rt.png").string();
  io::ImageU8 img = random_image(5, 7, 4, 3);
  io::write_png(path, img);
  io::ImageU8 back = io::read_png(path);
  CHECK(back.pix == img.pix);

  CHECK_THROWS_AS(io::read_png((dir / "missing.png").string()), IoError);

  auto garbage = (dir / "garbage.png").string();
  {
    std::ofstream f(garbage, std::ios::binary);
    f << "not a png at all";
  }
  CHECK_THROWS_WITH_AS(io::read_png(garbage), doctest::Contains("garbage.png"),
                       DataError);
}

TEST_CASE("mask conversion uses 0 and 255 with threshold 128") {
  Mask m(3, 4);
  m.at(0, 0) = 1;
  m.at(2, 3) = 1;
  io::ImageU8 img = io::mask_to_image(m);
  CHECK(img.channels == 1);
  CHECK(img.at(0, 0, 0) == 255);
  CHECK(img.at(0, 1, 0) == 0);
  CHECK(io::image_to_mask(img) == m);

  img.at(1, 1, 0) = 127;
  img.at(1, 2, 0) = 128;
  Mask back = io::image_to_mask(img);
  CHECK(back.at(1, 1) == 0);
  CHECK(back.at(1, 2) == 1);

  io::ImageU8 rgb(2, 2, 3);
  CHECK_THROWS_AS(io::image_to_mask(rgb), DataError);
}

TEST_CASE("tensor conversion rounds to nearest and clamps") {
  Tensor t = Tensor::zeros({3, 2, 2});
  t.at(0, 0, 0) = 0.5;
  t.at(1, 0, 0) = 1.7;    // clamps to 255
  t.at(2, 0, 0) = -0.3;   // clamps to 0
  t.at(0, 1, 1) = 1.0 / 255.0;
  io::ImageU8 img = io::tensor_to_image(t);
  CHECK(img.at(0, 0, 0) == 128);  // 0.5*255+0.5 = 128.0
  CHECK(img.at(0, 0, 1) == 255);
  CHECK(img.at(0, 0, 2) == 0);
  CHECK(img.at(1, 1, 0) == 1);

  Tensor back = io::image_to_tensor(img);
  CHECK(back.dim(0) == 3);
  CHECK(back.at(0, 0, 0) == doctest::Approx(128.0 / 255.0).epsilon(1e-12));

  // u8 quantization is the only loss: |t - decode(encode(t))| <= 0.5/255.
  Rng rng(5);
  Tensor r = Tensor::zeros({4, 6, 6});
  for (auto& v : r.data()) v = rng.uniform();
  Tensor rt = io::image_to_tensor(io::tensor_to_image(r));
  for (size_t i = 0; i < r.data().size(); ++i)
    CHECK(std::fabs(r.data()[i] - rt.data()[i]) <= 0.5 / 255.0 + 1e-12);

  CHECK_THROWS_AS(io::tensor_to_image(Tensor::zeros({2, 2, 2})), ValueError);
}

}
