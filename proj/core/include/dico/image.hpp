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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dico/tensor.hpp"

namespace dico {

// Floating-point raster in [0,1], row-major, interleaved channels (1 or 3).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> values;

  Image() = default;
  Image(int w, int h, int c = 3, float fill = 0.0f)
      : width(w), height(h), channels(c), values(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int y, int x, int c = 0) { return values[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c = 0) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

// 8-bit PNG (gray/RGB/RGBA/palette, converted to RGB) or binary PPM (P6,
// maxval 255) chosen by extension. Values are byte / 255 exactly.
// 16-bit inputs are rejected with IoError.
Image load_image(const std::filesystem::path& path);
// Grayscale load (PNG or PGM P5): one channel.
Image load_gray(const std::filesystem::path& path);

// Quantises clamp(v, 0, 1) * 255 rounding half away from zero. Writes
// RGB or grayscale depending on `image.channels`; .ppm/.pgm select PNM.
void save_image(const Image& image, const std::filesystem::path& path);

std::uint8_t quantize(float v);

// (1,C,H,W) tensor from an image, and back (sample n).
Tensor to_tensor(const Image& image);
Tensor to_tensor(std::span<const Image> images);
Image to_image(const Tensor& tensor, std::int64_t sample = 0);

// Per-channel min-max normalisation to [0,1] of a single-channel plane
// (constant planes map to 0).
Image normalized_plane(const Tensor& tensor, std::int64_t sample, std::int64_t channel);

}  // namespace dico
