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

#include "dico/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "dico/error.hpp"

namespace dico {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

bool is_pnm(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

Image decode_png(const std::filesystem::path& path, int channels) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  const std::string name = path.string();
  if (!png_image_begin_read_from_file(&img, name.c_str())) {
    throw IoError(name, std::string("cannot read PNG: ") + img.message);
  }
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw IoError(name, "unsupported format: 16-bit PNG (8-bit required)");
  }
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError(name, "PNG decode failed: " + msg);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), channels);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = bytes[i] / 255.0f;
  return out;
}

void encode_png(const Image& image, const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> bytes(image.values.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(image.values[i]);
  const std::string name = path.string();
  if (!png_image_write_to_file(&img, name.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError(name, std::string("PNG write failed: ") + img.message);
  }
}

std::string next_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

Image decode_pnm(const std::filesystem::path& path, int want_channels) {
  std::ifstream f(path, std::ios::binary);
  const std::string name = path.string();
  if (!f) throw IoError(name, "cannot open image");
  const std::string magic = next_token(f);
  int file_channels = magic == "P6" ? 3 : magic == "P5" ? 1 : 0;
  if (file_channels == 0) throw IoError(name, "unsupported format: expected binary PPM (P6) or PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(f));
    h = std::stoi(next_token(f));
    maxval = std::stoi(next_token(f));
  } catch (const std::exception&) {
    throw IoError(name, "malformed PNM header");
  }
  if (maxval != 255) throw IoError(name, "unsupported format: PNM maxval must be 255");
  if (w <= 0 || h <= 0) throw IoError(name, "malformed PNM extents");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * file_channels);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError(name, "truncated PNM data");
  Image out(w, h, want_channels);
  for (std::size_t p = 0; p < out.pixels(); ++p) {
    for (int c = 0; c < want_channels; ++c) {
      unsigned char b;
      if (file_channels == want_channels) {
        b = bytes[p * file_channels + c];
      } else if (file_channels == 1) {
        b = bytes[p];
      } else {
        // RGB -> gray by rounding the channel mean.
        const int s = bytes[p * 3] + bytes[p * 3 + 1] + bytes[p * 3 + 2];
        b = static_cast<unsigned char>((s + 1) / 3);
      }
      out.values[p * want_channels + c] = b / 255.0f;
    }
  }
  return out;
}

void encode_pnm(const Image& image, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path.string(), "cannot open for writing");
  f << (image.channels == 3 ? "P6" : "P5") << "\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.values.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(image.values[i]);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(path.string(), "write failed");
}

Image load_any(const std::filesystem::path& path, int channels) {
  if (!std::filesystem::exists(path)) throw IoError(path.string(), "no such file");
  return is_pnm(path) ? decode_pnm(path, channels) : decode_png(path, channels);
}

}  // namespace

std::uint8_t quantize(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

Image load_image(const std::filesystem::path& path) { return load_any(path, 3); }

Image load_gray(const std::filesystem::path& path) { return load_any(path, 1); }

void save_image(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) {
    throw IoError(path.string(), "only 1- or 3-channel images can be written");
  }
  if (is_pnm(path)) {
    encode_pnm(image, path);
  } else {
    encode_png(image, path);
  }
}

Tensor to_tensor(const Image& image) { return to_tensor(std::span<const Image>(&image, 1)); }

Tensor to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ParameterError("to_tensor: no images");
  const Image& first = images.front();
  const Shape s{static_cast<std::int64_t>(images.size()), first.channels, first.height, first.width};
  std::vector<float> values(static_cast<std::size_t>(s.numel()));
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& im = images[n];
    if (im.width != first.width) throw DimensionError("width", "images in a batch differ in width");
    if (im.height != first.height) throw DimensionError("height", "images in a batch differ in height");
    if (im.channels != first.channels) throw DimensionError("channel", "images in a batch differ in channels");
    for (int c = 0; c < im.channels; ++c)
      for (std::size_t p = 0; p < im.pixels(); ++p)
        values[(n * im.channels + c) * im.pixels() + p] = im.values[p * im.channels + c];
  }
  return Tensor(s, std::move(values));
}

Image to_image(const Tensor& tensor, std::int64_t sample) {
  const Shape& s = tensor.shape();
  if (s.c != 1 && s.c != 3) throw DimensionError("channel", "to_image needs 1 or 3 channels");
  if (sample < 0 || sample >= s.n) throw DimensionError("batch", "sample index out of range");
  Image out(static_cast<int>(s.w), static_cast<int>(s.h), static_cast<int>(s.c));
  const auto v = tensor.data();
  const std::size_t plane = out.pixels();
  for (std::int64_t c = 0; c < s.c; ++c)
    for (std::size_t p = 0; p < plane; ++p)
      out.values[p * s.c + c] = v[(sample * s.c + c) * plane + p];
  return out;
}

Image normalized_plane(const Tensor& tensor, std::int64_t sample, std::int64_t channel) {
  const Shape& s = tensor.shape();
  if (channel < 0 || channel >= s.c) throw DimensionError("channel", "channel index out of range");
  const auto v = tensor.data();
  const float* plane = v.data() + (sample * s.c + channel) * s.plane();
  const auto [lo, hi] = std::minmax_element(plane, plane + s.plane());
  const float range = *hi - *lo;
  Image out(static_cast<int>(s.w), static_cast<int>(s.h), 1);
  for (std::int64_t p = 0; p < s.plane(); ++p) out.values[p] = range > 0.0f ? (plane[p] - *lo) / range : 0.0f;
  return out;
}

}  // namespace dico
