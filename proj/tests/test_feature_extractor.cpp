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
#include <filesystem>

#include "dico/error.hpp"
#include "dico/feature_extractor.hpp"
#include "dico/ops.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace dico;

namespace {

double stddev(const Tensor& t) {
  double s = 0.0, s2 = 0.0;
  for (float v : t.data()) {
    s += v;
    s2 += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(t.numel());
  return std::sqrt(std::max(0.0, s2 / n - (s / n) * (s / n)));
}

}  // namespace

TEST_CASE("default pyramid shapes") {
  const FeatureExtractor ex(PyramidSpec::defaults());
  Rng rng(1);
  const FeaturePyramid p = ex.extract(testing::random_tensor({1, 3, 64, 64}, rng, 0.0, 1.0), true);
  CHECK(p.at("stage1").shape() == Shape{1, 16, 64, 64});
  CHECK(p.at("stage2").shape() == Shape{1, 32, 32, 32});
  CHECK(p.at("stage3").shape() == Shape{1, 64, 16, 16});
  CHECK(p.at("stage4").shape() == Shape{1, 64, 8, 8});
  CHECK_THROWS_AS(p.at("stage9"), ConfigError);
  CHECK_THROWS_AS(ex.extract(Tensor::zeros({1, 3, 60, 64}), true), DimensionError);
  CHECK_THROWS_AS(ex.extract(Tensor::zeros({1, 1, 64, 64}), true), DimensionError);
}

TEST_CASE("pyramid extraction is deterministic") {
  const FeatureExtractor ex(PyramidSpec::defaults());
  Rng rng(2);
  const Tensor img = testing::random_tensor({2, 3, 32, 32}, rng, 0.0, 1.0);
  const FeaturePyramid a = ex.extract(img, true);
  const FeaturePyramid b = ex.extract(img, true);
  for (const auto& [name, t] : a.activations) {
    const auto u = t.data();
    const auto v = b.at(name).data();
    for (std::size_t i = 0; i < u.size(); ++i) REQUIRE(u[i] == v[i]);
  }
}

TEST_CASE("bundled weights are seeded, unit-norm and orthogonal") {
  const PyramidSpec spec = PyramidSpec::defaults();
  const WeightSet a = bundled_weights(spec, 42);
  const WeightSet b = bundled_weights(spec, 42);
  const WeightSet c = bundled_weights(spec, 43);
  REQUIRE(a.size() == b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    const auto u = a[i].tensor.data();
    const auto v = b[i].tensor.data();
    for (std::size_t k = 0; k < u.size(); ++k) REQUIRE(u[k] == v[k]);
    const auto w = c[i].tensor.data();
    for (std::size_t k = 0; k < u.size(); ++k) differs = differs || u[k] != w[k];
  }
  CHECK(differs);

  for (const NamedTensor& nt : a) {
    if (nt.name.find(".weight") == std::string::npos) continue;
    CAPTURE(nt.name);
    const Shape& s = nt.tensor.shape();
    const std::int64_t row = s.c * s.h * s.w;
    const auto v = nt.tensor.data();
    for (std::int64_t o = 0; o < s.n; ++o) {
      double norm = 0.0, total = 0.0;
      for (std::int64_t k = 0; k < row; ++k) {
        norm += static_cast<double>(v[o * row + k]) * v[o * row + k];
        total += v[o * row + k];
      }
      CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-5);
      CHECK(std::abs(total) < 1e-5);
      for (std::int64_t p = o + 1; p < s.n; ++p) {
        double dot = 0.0;
        for (std::int64_t k = 0; k < row; ++k) dot += static_cast<double>(v[o * row + k]) * v[p * row + k];
        CHECK(std::abs(dot) < 1e-5);
      }
    }
  }
}

TEST_CASE("white-noise activations keep a moderate spread") {
  const FeatureExtractor ex(PyramidSpec::defaults());
  Rng rng(3);
  const FeaturePyramid p = ex.extract(testing::random_normal({2, 3, 64, 64}, rng), true);
  for (const auto& [name, t] : p.activations) {
    CAPTURE(name);
    const double s = stddev(t);
    CHECK(s >= 0.2);
    CHECK(s <= 5.0);
  }
}

TEST_CASE("stage-4 gradient reaches the input") {
  const FeatureExtractor ex(PyramidSpec::defaults());
  Rng rng(4);
  const Tensor img = testing::random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  const auto r = testing::grad_check(
      [&ex](const std::vector<Tensor>& in) { return ops::mean(ex.extract(in[0], false).at("stage4")); }, {img}, 7, 1e-2);
  CHECK(r.rel_error < 1e-3);
}

TEST_CASE("extractor weights are frozen") {
  const FeatureExtractor ex(PyramidSpec::defaults());
  const WeightSet before = ex.weights();
  std::vector<std::vector<float>> snapshot;
  for (const auto& nt : before) snapshot.emplace_back(nt.tensor.data().begin(), nt.tensor.data().end());
  Rng rng(5);
  Tensor img = testing::random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  img.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(ops::mean(ex.extract(img, false).at("stage4")));
  }
  CHECK(img.has_grad());
  for (std::size_t i = 0; i < ex.weights().size(); ++i) {
    const Tensor& w = ex.weights()[i].tensor;
    CHECK_FALSE(w.requires_grad());
    CHECK_FALSE(w.has_grad());
    for (std::size_t k = 0; k < snapshot[i].size(); ++k) REQUIRE(w.data()[k] == snapshot[i][k]);
  }
}

TEST_CASE("stop_gradient keeps the pyramid off the tape") {
  const FeatureExtractor ex(PyramidSpec::defaults());
  Tensor img = Tensor::full({1, 3, 16, 16}, 0.5f, true);
  Tape tape;
  TapeScope scope(tape);
  const FeaturePyramid p = ex.extract(img, true);
  CHECK_FALSE(p.at("stage4").requires_grad());
}

TEST_CASE("weight file round trip and errors") {
  const auto dir = testing::scratch_dir("extractor");
  PyramidSpec spec = PyramidSpec::defaults();
  const WeightSet w = bundled_weights(spec, 9);
  save_weights(w, dir / "w.dicow");
  spec.weight_file = dir / "w.dicow";
  const FeatureExtractor from_file(spec);
  const FeatureExtractor seeded(PyramidSpec::defaults(9));
  Rng rng(6);
  const Tensor img = testing::random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  const auto a = from_file.extract(img, true).at("stage4").data();
  const auto b = seeded.extract(img, true).at("stage4").data();
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);

  spec.weight_file = dir / "missing.dicow";
  CHECK_THROWS_AS(FeatureExtractor{spec}, IoError);

  PyramidSpec dup = PyramidSpec::defaults();
  dup.stages[1].name = dup.stages[0].name;
  CHECK_THROWS_AS(dup.validate(), ConfigError);
}
