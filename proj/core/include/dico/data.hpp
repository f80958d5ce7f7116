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
#include <optional>
#include <string>
#include <vector>

#include "dico/image.hpp"
#include "dico/tensor.hpp"

namespace dico {

// Procedural fixed-camera scene: a static background (vertical gradient and
// fixed rectangles), moving coloured sprites, and a night transform.
struct SyntheticSceneSpec {
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  int day_frames = 60;
  int night_frames = 60;

  int rectangles = 5;
  int sprites_min = 1;
  int sprites_max = 3;
  int sprite_size_min = 8;
  int sprite_size_max = 14;

  double gamma_min = 2.5;
  double gamma_max = 4.0;
  double scale_min = 0.1;
  double scale_max = 0.3;
  int flares_max = 2;
  double flare_sigma_min = 2.0;
  double flare_sigma_max = 5.0;
  double flare_intensity_min = 0.3;
  double flare_intensity_max = 0.7;
  double noise_sigma = 0.02;

  void validate() const;
  std::string to_json() const;
  static SyntheticSceneSpec from_json(const std::string& text);
  static SyntheticSceneSpec load(const std::filesystem::path& path);
};

struct SyntheticScene {
  SyntheticSceneSpec spec;
  Image background;  // true sprite-free background
  std::vector<Image> day;
  std::vector<Image> night;
  // Single-channel masks, 1 on sprite pixels.
  std::vector<Image> day_masks;
  std::vector<Image> night_masks;
};

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec);

// Layout: night/NNNN.png, day/NNNN.png, masks/{night,day}_NNNN.png,
// background.png (frame average of day/), captured_background.png (true
// background) and spec.json.
void write_synthetic_scene(const SyntheticScene& scene, const std::filesystem::path& root);

// Per-pixel arithmetic mean.
Image synth_background(const std::vector<Image>& images);

struct SceneDataset {
  std::filesystem::path root;
  std::vector<std::filesystem::path> night_files;
  std::vector<std::filesystem::path> day_files;
  std::optional<std::filesystem::path> background_file;
  std::vector<Image> night;
  std::vector<Image> day;
  Image reference;
  bool reference_synthesized = false;

  int width() const { return night.empty() ? 0 : night.front().width; }
  int height() const { return night.empty() ? 0 : night.front().height; }
};

// Reads night/ and day/ (PNG or PPM, lexicographic order) and the
// reference. Without background.png the reference is synthesised from the
// day frames when `synthesize_background` is set, otherwise ConfigError.
SceneDataset load_scene(const std::filesystem::path& root, bool synthesize_background = true);

// Ground-truth night masks (masks/night_NNNN.png) aligned with night_files,
// if present.
std::vector<Image> load_night_masks(const SceneDataset& dataset);

struct Batch {
  Tensor night;      // (B,3,H,W)
  Tensor day;        // (B,3,H,W)
  Tensor reference;  // (1,3,H,W), constant
  std::vector<std::size_t> night_indices;
  std::vector<std::size_t> day_indices;
};

/// Uniform unpaired sampling. The batch for step t depends only on (seed, t).
class BatchIterator {
 public:
  BatchIterator(const SceneDataset& dataset, int batch_size, std::uint64_t seed);

  Batch at(std::int64_t step) const;
  Batch next() { return at(step_++); }
  void seek(std::int64_t step) { step_ = step; }
  std::int64_t position() const { return step_; }

  // Indices only, for tests.
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> indices(std::int64_t step) const;

 private:
  const SceneDataset* dataset_;
  int batch_size_;
  std::uint64_t seed_;
  std::int64_t step_ = 0;
  Tensor reference_;
};

}  // namespace dico
