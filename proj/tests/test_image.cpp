// Copyright 2026 The DiCo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "doctest.h"

#include <cstdint>
#include <fstream>

#include "dico/error.hpp"
#include "dico/image.hpp"
#include "dico/rng.hpp"
#include "test_util.hpp"

using namespace dico;

namespace {

std::uint32_t crc32(const std::vector<std::uint8_t>& bytes, std::size_t begin) {
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = begin; i < bytes.size(); ++i) {
    c ^= bytes[i];
    for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xEDB88320u & (0u - (c & 1u)));
  }
  return ~c;
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void chunk(std::vector<std::uint8_t>& png, const char* type, const std::vector<std::uint8_t>& data) {
  put32(png, static_cast<std::uint32_t>(data.size()));
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  png.insert(png.end(), body.begin(), body.end());
  put32(png, crc32(body, 0));
}

// Minimal 16-bit grayscale PNG with a stored (uncompressed) zlib stream.
void write_png16(const std::filesystem::path& path, int w, int h) {
  std::vector<std::uint8_t> raw;
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    for (int x = 0; x < w; ++x) {
      raw.push_back(static_cast<std::uint8_t>(x * 16));
      raw.push_back(0x80);
    }
  }
  std::vector<std::uint8_t> z = {0x78, 0x01, 0x01};
  const auto len = static_cast<std::uint16_t>(raw.size());
  z.push_back(static_cast<std::uint8_t>(len & 0xFF));
  z.push_back(static_cast<std::uint8_t>(len >> 8));
  z.push_back(static_cast<std::uint8_t>(~len & 0xFF));
  z.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xFF));
  z.insert(z.end(), raw.begin(), raw.end());
  std::uint32_t a = 1, b = 0;
  for (std::uint8_t v : raw) {
    a = (a + v) % 65521;
    b = (b + a) % 65521;
  }
  put32(z, (b << 16) | a);

  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  std::vector<std::uint8_t> ihdr;
  put32(ihdr, static_cast<std::uint32_t>(w));
  put32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.insert(ihdr.end(), {16, 0, 0, 0, 0});
  chunk(png, "IHDR", ihdr);
  chunk(png, "IDAT", z);
  chunk(png, "IEND", {});
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(png.data()),
                                              static_cast<std::streamsize>(png.size()));
}

Image random_image(int w, int h, int c, std::uint64_t seed) {
  Rng rng(seed);
  Image im(w, h, c);
  for (float& v : im.values) v = static_cast<float>(rng.below(256)) / 255.0f;
  return im;
}

}  // namespace

TEST_CASE("byte values map exactly") {
  CHECK(quantize(1.0f) == 255);
  CHECK(quantize(0.0f) == 0);
  CHECK(quantize(-0.3f) == 0);
  CHECK(quantize(7.0f) == 255);
  CHECK(quantize(0.5f / 255.0f) == 1);
  const auto dir = testing::scratch_dir("image_bytes");
  Image im(2, 1, 3);
  im.at(0, 0, 0) = 1.0f;
  save_image(im, dir / "a.png");
  const Image back = load_image(dir / "a.png");
  CHECK(back.at(0, 0, 0) == 1.0f);
  CHECK(back.at(0, 1, 2) == 0.0f);
}

TEST_CASE("png and pnm round trips are byte exact") {
  const auto dir = testing::scratch_dir("image_roundtrip");
  const Image rgb = random_image(13, 9, 3, 1);
  const Image gray = random_image(7, 5, 1, 2);
  for (const char* name : {"rgb.png", "rgb.ppm"}) {
    CAPTURE(name);
    save_image(rgb, dir / name);
    const Image back = load_image(dir / name);
    REQUIRE(back.width == 13);
    REQUIRE(back.height == 9);
    CHECK(back.values == rgb.values);
    save_image(back, dir / (std::string("again_") + name));
    CHECK(testing::read_bytes(dir / name) == testing::read_bytes(dir / (std::string("again_") + name)));
  }
  for (const char* name : {"gray.png", "gray.pgm"}) {
    CAPTURE(name);
    save_image(gray, dir / name);
    const Image back = load_gray(dir / name);
    CHECK(back.channels == 1);
    CHECK(back.values == gray.values);
  }
  save_image(gray, dir / "g.png");
  const Image expanded = load_image(dir / "g.png");
  CHECK(expanded.channels == 3);
  CHECK(expanded.at(2, 3, 1) == gray.at(2, 3));
}

TEST_CASE("load errors name the file") {
  const auto dir = testing::scratch_dir("image_errors");
  write_png16(dir / "deep.png", 4, 3);
  try {
    load_image(dir / "deep.png");
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("16-bit") != std::string::npos);
    CHECK(e.path().find("deep.png") != std::string::npos);
  }
  CHECK_THROWS_AS(load_image(dir / "missing.png"), IoError);
  std::ofstream(dir / "junk.png") << "not an image";
  CHECK_THROWS_AS(load_image(dir / "junk.png"), IoError);
}

TEST_CASE("tensor conversion") {
  const Image a = random_image(6, 4, 3, 3);
  const Tensor t = to_tensor(a);
  CHECK(t.shape() == Shape{1, 3, 4, 6});
  CHECK(t.at(0, 2, 3, 5) == a.at(3, 5, 2));
  CHECK(to_image(t).values == a.values);

  const std::vector<Image> batch = {a, random_image(6, 4, 3, 4)};
  const Tensor b = to_tensor(std::span<const Image>(batch));
  CHECK(b.shape() == Shape{2, 3, 4, 6});
  CHECK(to_image(b, 1).values == batch[1].values);

  const std::vector<Image> bad = {a, random_image(5, 4, 3, 5)};
  try {
    to_tensor(std::span<const Image>(bad));
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    CHECK(e.axis() == "width");
  }
}

TEST_CASE("normalised planes") {
  const Tensor t({1, 2, 1, 3}, {1.0f, 2.0f, 3.0f, 5.0f, 5.0f, 5.0f});
  const Image p = normalized_plane(t, 0, 0);
  CHECK(p.channels == 1);
  CHECK(p.values == std::vector<float>{0.0f, 0.5f, 1.0f});
  CHECK(normalized_plane(t, 0, 1).values == std::vector<float>{0.0f, 0.0f, 0.0f});
}
