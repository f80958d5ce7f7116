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

#include "dico/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dico/error.hpp"
#include "dico/rng.hpp"
#include "json.hpp"

namespace dico {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Rgb = std::array<float, 3>;

constexpr std::array<Rgb, 7> kSpritePalette = {{
    {0.90f, 0.10f, 0.10f},
    {0.10f, 0.30f, 0.90f},
    {0.95f, 0.85f, 0.10f},
    {0.10f, 0.80f, 0.20f},
    {0.90f, 0.20f, 0.80f},
    {0.97f, 0.97f, 0.97f},
    {0.10f, 0.90f, 0.90f},
}};

constexpr Rgb kFlareTint = {1.0f, 0.9f, 0.6f};

// Stream keys of the scene generator.
enum : std::uint64_t { kBackgroundStream = 1, kDayStream = 2, kNightStream = 3 };

std::string frame_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu.png", i);
  return buf;
}

Image make_background(const SyntheticSceneSpec& spec, Rng& rng) {
  Image bg(spec.width, spec.height, 3);
  Rgb top, bottom;
  for (int c = 0; c < 3; ++c) {
    top[c] = static_cast<float>(rng.uniform(0.65, 0.95));
    bottom[c] = static_cast<float>(rng.uniform(0.4, 0.75));
  }
  for (int y = 0; y < spec.height; ++y) {
    const float t = spec.height > 1 ? static_cast<float>(y) / static_cast<float>(spec.height - 1) : 0.0f;
    for (int x = 0; x < spec.width; ++x)
      for (int c = 0; c < 3; ++c) bg.at(y, x, c) = (1.0f - t) * top[c] + t * bottom[c];
  }
  for (int r = 0; r < spec.rectangles; ++r) {
    const int w = static_cast<int>(rng.between(spec.width / 8, spec.width / 3));
    const int h = static_cast<int>(rng.between(spec.height / 8, spec.height / 2));
    const int x0 = static_cast<int>(rng.between(0, spec.width - w));
    const int y0 = static_cast<int>(rng.between(0, spec.height - h));
    Rgb col;
    for (int c = 0; c < 3; ++c) col[c] = static_cast<float>(rng.uniform(0.3, 0.85));
    const bool windows = rng.uniform() < 0.5;
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) {
        const bool lit = windows && (y - y0) % 4 == 1 && (x - x0) % 4 == 1;
        for (int c = 0; c < 3; ++c) bg.at(y, x, c) = lit ? std::min(1.0f, col[c] + 0.25f) : col[c];
      }
  }
  return bg;
}

// Pastes sprites onto a copy of the background; returns the frame and mask.
std::pair<Image, Image> compose_frame(const SyntheticSceneSpec& spec, const Image& background, Rng& rng) {
  Image frame = background;
  Image mask(spec.width, spec.height, 1);
  const int count = static_cast<int>(rng.between(spec.sprites_min, spec.sprites_max));
  for (int s = 0; s < count; ++s) {
    const int w = static_cast<int>(rng.between(spec.sprite_size_min, spec.sprite_size_max));
    const int h = static_cast<int>(rng.between(spec.sprite_size_min, spec.sprite_size_max));
    const int x0 = static_cast<int>(rng.between(0, spec.width - w));
    const int y0 = static_cast<int>(rng.between(0, spec.height - h));
    const Rgb col = kSpritePalette[rng.below(kSpritePalette.size())];
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) {
        const bool stripe = (y - y0) >= h / 3 && (y - y0) < h / 3 + 2;
        for (int c = 0; c < 3; ++c) frame.at(y, x, c) = stripe ? 0.5f * col[c] : col[c];
        mask.at(y, x) = 1.0f;
      }
  }
  return {std::move(frame), std::move(mask)};
}

Image night_transform(const SyntheticSceneSpec& spec, const Image& day, Rng& rng) {
  const double gamma = rng.uniform(spec.gamma_min, spec.gamma_max);
  const double scale = rng.uniform(spec.scale_min, spec.scale_max);
  Image out = day;
  for (float& v : out.values) v = static_cast<float>(std::pow(static_cast<double>(v), gamma) * scale);
  const int flares = static_cast<int>(rng.between(0, spec.flares_max));
  for (int f = 0; f < flares; ++f) {
    const double cx = rng.uniform(0.0, spec.width);
    const double cy = rng.uniform(0.0, spec.height);
    const double sigma = rng.uniform(spec.flare_sigma_min, spec.flare_sigma_max);
    const double amp = rng.uniform(spec.flare_intensity_min, spec.flare_intensity_max);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double g = amp * std::exp(-d2 / (2.0 * sigma * sigma));
        for (int c = 0; c < 3; ++c) out.at(y, x, c) += static_cast<float>(g * kFlareTint[c]);
      }
  }
  for (float& v : out.values) {
    v = std::clamp(v, 0.0f, 1.0f);
    v = std::clamp(v + static_cast<float>(rng.normal(0.0, spec.noise_sigma)), 0.0f, 1.0f);
  }
  return out;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "missing image directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".ppm") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  if (out.empty()) throw IoError(dir.string(), "no images found");
  return out;
}

void check_extents(const Image& im, const Image& first, const fs::path& path) {
  if (im.width != first.width) throw DimensionError("width", path.string() + ": width differs within scene");
  if (im.height != first.height) throw DimensionError("height", path.string() + ": height differs within scene");
}

}  // namespace

void SyntheticSceneSpec::validate() const {
  if (width < 8 || height < 8) throw ConfigError("scene extents must be at least 8x8");
  if (day_frames <= 0 || night_frames <= 0) throw ConfigError("scene frame counts must be positive");
  if (sprites_min < 0 || sprites_max < sprites_min) throw ConfigError("invalid sprite count range");
  if (sprite_size_min <= 0 || sprite_size_max < sprite_size_min || sprite_size_max > std::min(width, height)) {
    throw ConfigError("invalid sprite size range");
  }
  if (rectangles < 0) throw ConfigError("rectangle count must be non-negative");
  if (!(gamma_min > 0.0) || gamma_max < gamma_min) throw ConfigError("invalid gamma range");
  if (!(scale_min > 0.0) || scale_max < scale_min) throw ConfigError("invalid brightness scale range");
  if (flares_max < 0) throw ConfigError("flare count must be non-negative");
  if (!(flare_sigma_min > 0.0) || flare_sigma_max < flare_sigma_min) throw ConfigError("invalid flare sigma range");
  if (flare_intensity_max < flare_intensity_min) throw ConfigError("invalid flare intensity range");
  if (noise_sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
}

#define DICO_SCENE_FIELDS(X)                                                                            \
  X(seed) X(width) X(height) X(day_frames) X(night_frames) X(rectangles) X(sprites_min) X(sprites_max)  \
  X(sprite_size_min) X(sprite_size_max) X(gamma_min) X(gamma_max) X(scale_min) X(scale_max) X(flares_max) \
  X(flare_sigma_min) X(flare_sigma_max) X(flare_intensity_min) X(flare_intensity_max) X(noise_sigma)

std::string SyntheticSceneSpec::to_json() const {
  json j;
#define X(f) j[#f] = f;
  DICO_SCENE_FIELDS(X)
#undef X
  return j.dump(2) + "\n";
}

SyntheticSceneSpec SyntheticSceneSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("scene spec must be a JSON object");
  SyntheticSceneSpec spec;
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    try {
#define X(f)                       \
  if (key == #f) {                 \
    value.get_to(spec.f);          \
    known = true;                  \
  }
      DICO_SCENE_FIELDS(X)
#undef X
    } catch (const json::exception& e) {
      throw ConfigError("scene spec field '" + key + "': " + e.what());
    }
    if (!known) throw ConfigError("unknown scene spec field '" + key + "'");
  }
  spec.validate();
  return spec;
}

SyntheticSceneSpec SyntheticSceneSpec::load(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(path.string(), "cannot open scene spec");
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec) {
  spec.validate();
  SyntheticScene scene;
  scene.spec = spec;
  Rng bg_rng(Rng::derive(spec.seed, kBackgroundStream));
  scene.background = make_background(spec, bg_rng);
  const std::uint64_t day_seed = Rng::derive(spec.seed, kDayStream);
  for (int i = 0; i < spec.day_frames; ++i) {
    Rng rng(Rng::derive(day_seed, static_cast<std::uint64_t>(i)));
    auto [frame, mask] = compose_frame(spec, scene.background, rng);
    scene.day.push_back(std::move(frame));
    scene.day_masks.push_back(std::move(mask));
  }
  const std::uint64_t night_seed = Rng::derive(spec.seed, kNightStream);
  for (int i = 0; i < spec.night_frames; ++i) {
    Rng rng(Rng::derive(night_seed, static_cast<std::uint64_t>(i)));
    auto [frame, mask] = compose_frame(spec, scene.background, rng);
    scene.night.push_back(night_transform(spec, frame, rng));
    scene.night_masks.push_back(std::move(mask));
  }
  return scene;
}

void write_synthetic_scene(const SyntheticScene& scene, const fs::path& root) {
  std::error_code ec;
  for (const char* sub : {"night", "day", "masks"}) {
    fs::create_directories(root / sub, ec);
    if (ec) throw IoError((root / sub).string(), "cannot create directory: " + ec.message());
  }
  for (std::size_t i = 0; i < scene.day.size(); ++i) {
    save_image(scene.day[i], root / "day" / frame_name(i));
    save_image(scene.day_masks[i], root / "masks" / ("day_" + frame_name(i)));
  }
  for (std::size_t i = 0; i < scene.night.size(); ++i) {
    save_image(scene.night[i], root / "night" / frame_name(i));
    save_image(scene.night_masks[i], root / "masks" / ("night_" + frame_name(i)));
  }
  save_image(synth_background(scene.day), root / "background.png");
  save_image(scene.background, root / "captured_background.png");
  std::ofstream f(root / "spec.json", std::ios::trunc);
  if (!f) throw IoError((root / "spec.json").string(), "cannot open for writing");
  f << scene.spec.to_json();
}

Image synth_background(const std::vector<Image>& images) {
  if (images.empty()) throw ParameterError("synth_background: empty image list");
  const Image& first = images.front();
  std::vector<double> acc(first.values.size(), 0.0);
  for (const Image& im : images) {
    if (im.width != first.width) throw DimensionError("width", "synth_background: images differ in width");
    if (im.height != first.height) throw DimensionError("height", "synth_background: images differ in height");
    if (im.channels != first.channels) throw DimensionError("channel", "synth_background: images differ in channels");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += im.values[i];
  }
  Image out(first.width, first.height, first.channels);
  const double n = static_cast<double>(images.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.values[i] = static_cast<float>(acc[i] / n);
  return out;
}

SceneDataset load_scene(const fs::path& root, bool synthesize_background) {
  SceneDataset ds;
  ds.root = root;
  if (!fs::is_directory(root)) throw IoError(root.string(), "scene directory does not exist");
  ds.night_files = list_images(root / "night");
  ds.day_files = list_images(root / "day");
  for (const auto& p : ds.night_files) ds.night.push_back(load_image(p));
  for (const auto& p : ds.day_files) ds.day.push_back(load_image(p));
  const Image& first = ds.night.front();
  for (std::size_t i = 0; i < ds.night.size(); ++i) check_extents(ds.night[i], first, ds.night_files[i]);
  for (std::size_t i = 0; i < ds.day.size(); ++i) check_extents(ds.day[i], first, ds.day_files[i]);
  const fs::path bg = root / "background.png";
  if (fs::exists(bg)) {
    ds.background_file = bg;
    ds.reference = load_image(bg);
    check_extents(ds.reference, first, bg);
  } else if (synthesize_background) {
    ds.reference = synth_background(ds.day);
    ds.reference_synthesized = true;
  } else {
    throw ConfigError(root.string() + ": background.png missing and background synthesis disabled");
  }
  return ds;
}

std::vector<Image> load_night_masks(const SceneDataset& dataset) {
  std::vector<Image> masks;
  for (const auto& p : dataset.night_files) {
    const fs::path m = dataset.root / "masks" / ("night_" + p.filename().replace_extension(".png").string());
    if (!fs::exists(m)) return {};
    masks.push_back(load_gray(m));
  }
  return masks;
}

BatchIterator::BatchIterator(const SceneDataset& dataset, int batch_size, std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), seed_(seed) {
  if (batch_size <= 0) throw ParameterError("batch size must be positive");
  if (dataset.night.empty() || dataset.day.empty()) throw ConfigError("dataset has no night or day images");
  if (dataset.reference.values.empty()) throw ConfigError("dataset has no background reference");
  reference_ = to_tensor(dataset.reference);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> BatchIterator::indices(std::int64_t step) const {
  Rng rng(Rng::derive(seed_, static_cast<std::uint64_t>(step)));
  std::vector<std::size_t> night(batch_size_), day(batch_size_);
  for (int b = 0; b < batch_size_; ++b) {
    night[b] = static_cast<std::size_t>(rng.below(dataset_->night.size()));
    day[b] = static_cast<std::size_t>(rng.below(dataset_->day.size()));
  }
  return {std::move(night), std::move(day)};
}

Batch BatchIterator::at(std::int64_t step) const {
  auto [ni, di] = indices(step);
  std::vector<Image> night, day;
  for (auto i : ni) night.push_back(dataset_->night[i]);
  for (auto i : di) day.push_back(dataset_->day[i]);
  Batch b;
  b.night = to_tensor(std::span<const Image>(night));
  b.day = to_tensor(std::span<const Image>(day));
  b.reference = reference_;
  b.night_indices = std::move(ni);
  b.day_indices = std::move(di);
  return b;
}

}  // namespace dico
