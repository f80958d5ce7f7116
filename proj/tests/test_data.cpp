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

#include <cmath>
#include <fstream>

#include "dico/data.hpp"
#include "dico/error.hpp"
#include "test_util.hpp"

using namespace dico;

namespace {

double mean_value(const Image& im) {
  double s = 0.0;
  for (float v : im.values) s += v;
  return s / static_cast<double>(im.values.size());
}

SceneDataset fake_dataset(std::size_t nights, std::size_t days) {
  SceneDataset ds;
  for (std::size_t i = 0; i < nights; ++i) ds.night.emplace_back(4, 4, 3, static_cast<float>(i) / 100.0f);
  for (std::size_t i = 0; i < days; ++i) ds.day.emplace_back(4, 4, 3, static_cast<float>(i) / 100.0f);
  ds.reference = Image(4, 4, 3, 0.5f);
  return ds;
}

SyntheticSceneSpec small_spec() {
  SyntheticSceneSpec s;
  s.width = 32;
  s.height = 32;
  s.day_frames = 6;
  s.night_frames = 5;
  return s;
}

}  // namespace

TEST_CASE("synthetic scenes are seeded") {
  const SyntheticScene a = generate_synthetic_scene(small_spec());
  const SyntheticScene b = generate_synthetic_scene(small_spec());
  REQUIRE(a.day.size() == 6);
  REQUIRE(a.night.size() == 5);
  for (std::size_t i = 0; i < a.day.size(); ++i) CHECK(a.day[i].values == b.day[i].values);
  for (std::size_t i = 0; i < a.night.size(); ++i) {
    CHECK(a.night[i].values == b.night[i].values);
    CHECK(a.night_masks[i].values == b.night_masks[i].values);
  }
  SyntheticSceneSpec other = small_spec();
  other.seed = 1;
  CHECK(generate_synthetic_scene(other).night[0].values != a.night[0].values);
}

TEST_CASE("default scene statistics") {
  const SyntheticScene s = generate_synthetic_scene(SyntheticSceneSpec{});
  REQUIRE(s.day.size() == 60);
  REQUIRE(s.night.size() == 60);
  double day = 0.0, night = 0.0;
  for (const Image& im : s.day) day += mean_value(im);
  for (const Image& im : s.night) night += mean_value(im);
  CHECK(night < 0.3 * day);

  for (const auto* masks : {&s.day_masks, &s.night_masks})
    for (const Image& m : *masks) {
      const double frac = mean_value(m);
      CHECK(frac >= 0.01);
      CHECK(frac <= 0.20);
    }

  const Image avg = synth_background(s.day);
  double worst = 0.0;
  for (int y = 0; y < avg.height; ++y)
    for (int x = 0; x < avg.width; ++x) {
      bool covered = false;
      for (const Image& m : s.day_masks) covered = covered || m.at(y, x) > 0.5f;
      if (covered) continue;
      for (int c = 0; c < 3; ++c) worst = std::max(worst, static_cast<double>(std::abs(avg.at(y, x, c) - s.background.at(y, x, c))));
    }
  CHECK(worst < 0.05);

  double mean_err = 0.0;
  for (std::size_t i = 0; i < avg.values.size(); ++i) mean_err += std::abs(avg.values[i] - s.background.values[i]);
  CHECK(mean_err / static_cast<double>(avg.values.size()) < 0.05);
}

TEST_CASE("frame averaging") {
  Image a(3, 2, 3, 0.2f);
  Image b(3, 2, 3, 0.6f);
  const Image m = synth_background({a, b});
  for (float v : m.values) CHECK(v == doctest::Approx(0.4f).epsilon(1e-6));
  Image c(3, 2, 3);
  for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] = static_cast<float>(i) / 17.0f;
  CHECK(synth_background({c, c, c, c, c}).values == c.values);
  CHECK_THROWS_AS(synth_background({}), ParameterError);
  CHECK_THROWS_AS(synth_background({a, Image(2, 2, 3)}), DimensionError);
}

TEST_CASE("scene spec json") {
  SyntheticSceneSpec s = small_spec();
  s.seed = 77;
  const SyntheticSceneSpec back = SyntheticSceneSpec::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK(back.seed == 77);
  CHECK_THROWS_AS(SyntheticSceneSpec::from_json(R"({"seeed": 1})"), ConfigError);
  CHECK_THROWS_AS(SyntheticSceneSpec::from_json("{"), ConfigError);
  SyntheticSceneSpec bad;
  bad.sprites_min = 4;
  bad.sprites_max = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("scene directories load back") {
  const auto dir = testing::scratch_dir("scene_io");
  const SyntheticScene s = generate_synthetic_scene(small_spec());
  write_synthetic_scene(s, dir);
  for (const char* f : {"background.png", "captured_background.png", "spec.json", "night/0000.png", "day/0005.png",
                        "masks/night_0004.png"})
    CHECK(std::filesystem::exists(dir / f));

  const SceneDataset ds = load_scene(dir);
  CHECK(ds.night.size() == 5);
  CHECK(ds.day.size() == 6);
  CHECK_FALSE(ds.reference_synthesized);
  REQUIRE(ds.night[3].values.size() == s.night[3].values.size());
  for (std::size_t i = 0; i < ds.night[3].values.size(); ++i)
    CHECK(ds.night[3].values[i] == static_cast<float>(quantize(s.night[3].values[i])) / 255.0f);
  CHECK(ds.night_files[0].filename() == "0000.png");
  const auto masks = load_night_masks(ds);
  REQUIRE(masks.size() == 5);
  CHECK(masks[2].values == s.night_masks[2].values);

  std::filesystem::remove(dir / "background.png");
  CHECK_THROWS_AS(load_scene(dir, false), ConfigError);
  const SceneDataset synth = load_scene(dir, true);
  CHECK(synth.reference_synthesized);
  CHECK(synth.reference.values == synth_background(synth.day).values);
}

TEST_CASE("batch iterator sampling") {
  const SceneDataset ds = fake_dataset(10, 7);
  BatchIterator a(ds, 1, 5);
  BatchIterator b(ds, 1, 5);
  for (int i = 0; i < 20; ++i) {
    const Batch x = a.next();
    const Batch y = b.next();
    CHECK(x.night_indices == y.night_indices);
    CHECK(x.day_indices == y.day_indices);
    CHECK(x.reference.shape() == Shape{1, 3, 4, 4});
  }
  CHECK(a.position() == 20);
  CHECK(a.at(7).night_indices == BatchIterator(ds, 1, 5).at(7).night_indices);

  std::vector<int> night(10, 0), day(7, 0);
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    const auto [n, d] = a.indices(t);
    REQUIRE(n.size() == 1);
    REQUIRE(n[0] < 10);
    REQUIRE(d[0] < 7);
    ++night[n[0]];
    ++day[d[0]];
  }
  auto within = [draws](const std::vector<int>& counts) {
    const double p = 1.0 / static_cast<double>(counts.size());
    const double sigma = std::sqrt(draws * p * (1.0 - p));
    for (int c : counts)
      if (std::abs(c - draws * p) > 3.0 * sigma) return false;
    return true;
  };
  CHECK(within(night));
  CHECK(within(day));

  BatchIterator four(ds, 4, 1);
  const Batch b4 = four.at(0);
  CHECK(b4.night.shape() == Shape{4, 3, 4, 4});
  CHECK(b4.day.shape() == Shape{4, 3, 4, 4});
}
