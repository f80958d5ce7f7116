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

#include "dico/color_invariants.hpp"
#include "dico/error.hpp"
#include "dico/ops.hpp"
#include "gradcheck.hpp"

using namespace dico;
using namespace dico::color;

namespace {

Tensor pixel(float r, float g, float b) { return Tensor({1, 3, 1, 1}, {r, g, b}); }

Tensor ramp_plane(int h, int w) {
  std::vector<float> v(static_cast<std::size_t>(h * w));
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) v[static_cast<std::size_t>(i * w + j)] = static_cast<float>(j);
  return Tensor({1, 1, h, w}, std::move(v));
}

}  // namespace

TEST_CASE("gaussian colour model reproduces the matrix columns") {
  const float expected[3][3] = {{0.06f, 0.30f, 0.34f}, {0.63f, 0.04f, -0.60f}, {0.27f, -0.35f, 0.17f}};
  for (int c = 0; c < 3; ++c) {
    const GaussianColorPlanes p = gaussian_color_model(pixel(c == 0, c == 1, c == 2));
    CHECK(p.e.item() == expected[c][0]);
    CHECK(p.el.item() == expected[c][1]);
    CHECK(p.ell.item() == expected[c][2]);
  }
  const GaussianColorPlanes zero = gaussian_color_model(pixel(0, 0, 0));
  CHECK(zero.e.item() == 0.0f);
  CHECK(zero.el.item() == 0.0f);
  CHECK(zero.ell.item() == 0.0f);
  const GaussianColorPlanes ones = gaussian_color_model(pixel(1, 1, 1));
  CHECK(ones.e.item() == doctest::Approx(0.96).epsilon(1e-6));
  CHECK(ones.el.item() == doctest::Approx(-0.01).epsilon(1e-5));
  CHECK(ones.ell.item() == doctest::Approx(-0.09).epsilon(1e-6));
  CHECK_THROWS_AS(gaussian_color_model(Tensor::zeros({1, 4, 2, 2})), DimensionError);
}

TEST_CASE("derivative kernels") {
  CHECK(kernel_radius(1.0) == 3);
  CHECK(kernel_radius(1.5) == 5);
  CHECK_THROWS_AS(kernel_radius(0.0), ParameterError);
  const auto s = smoothing_taps(1.0);
  double total = s[0];
  for (std::size_t t = 1; t < s.size(); ++t) total += 2.0 * s[t];
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  const auto d = derivative_taps(1.0);
  CHECK(d[0] == 0.0f);
  double moment = 0.0;
  for (std::size_t t = 1; t < d.size(); ++t) moment += 2.0 * static_cast<double>(t) * d[t];
  CHECK(moment == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("ramp along columns has unit column derivative and zero row derivative") {
  const Tensor e = ramp_plane(16, 16);
  const GaussianColorPlanes planes{e, Tensor::zeros(e.shape()), Tensor::zeros(e.shape())};
  const DerivativeSet d = gaussian_derivatives(planes, 1.0);
  const int r = kernel_radius(1.0);
  for (int i = r; i < 16 - r; ++i)
    for (int j = r; j < 16 - r; ++j) {
      CHECK(std::abs(d.e_j.at(0, 0, i, j) - 1.0f) < 1e-5f);
      CHECK(std::abs(d.e_i.at(0, 0, i, j)) < 1e-5f);
    }
}

TEST_CASE("constant planes have exactly zero derivatives and invariants") {
  const Tensor img = Tensor::full({1, 3, 12, 12}, 0.4f);
  const DerivativeSet d = gaussian_derivatives(gaussian_color_model(img));
  for (const Tensor* t : {&d.e_i, &d.e_j, &d.el_i, &d.el_j, &d.ell_i, &d.ell_j})
    for (float v : t->data()) CHECK(v == 0.0f);
  const InvariantStack inv = invariants_of(img);
  CHECK(inv.phi.shape() == Shape{1, 5, 12, 12});
  for (float v : inv.phi.data()) CHECK(v == 0.0f);
}

TEST_CASE("derivative filtering validates its arguments") {
  const Tensor small = Tensor::zeros({1, 3, 6, 12});
  CHECK_THROWS_AS(invariants_of(small), DimensionError);
  CHECK_THROWS_AS(invariants_of(Tensor::zeros({1, 3, 12, 12}), -1.0), ParameterError);
  CHECK_THROWS_AS(invariants_of(Tensor::zeros({1, 3, 12, 12}), 1.0, 0.0), ParameterError);
}

TEST_CASE("invariants are non-negative and finite on random images") {
  Rng rng(17);
  const InvariantStack inv = invariants_of(testing::random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0));
  for (float v : inv.phi.data()) {
    CHECK(v >= 0.0f);
    CHECK(std::isfinite(v));
  }
}

TEST_CASE("intensity scaling leaves W, C, H, N unchanged and scales E") {
  Rng rng(23);
  const Tensor img = testing::random_tensor({1, 3, 32, 32}, rng, 0.05, 1.0);
  const Tensor base = invariants_of(img).phi;
  for (float c : {0.5f, 2.0f}) {
    CAPTURE(c);
    const Tensor scaled = invariants_of(ops::scale(img, c)).phi;
    const std::int64_t plane = base.shape().plane();
    const auto b = base.data();
    const auto s = scaled.data();
    double worst = 0.0;
    for (std::int64_t p = 0; p < plane; ++p) {
      if (b[static_cast<std::size_t>(p)] <= 0.05f) continue;
      const double e0 = b[static_cast<std::size_t>(p)];
      const double e1 = s[static_cast<std::size_t>(p)];
      worst = std::max(worst, std::abs(e1 - c * e0) / (c * std::abs(e0) + 1e-6));
      for (int k = 1; k < 5; ++k) {
        const double v0 = b[static_cast<std::size_t>(k * plane + p)];
        const double v1 = s[static_cast<std::size_t>(k * plane + p)];
        worst = std::max(worst, std::abs(v1 - v0) / (std::abs(v0) + 1e-6));
      }
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("ensemble selection and averaging") {
  Rng rng(31);
  const InvariantStack inv = invariants_of(testing::random_tensor({1, 3, 12, 12}, rng, 0.0, 1.0));
  std::vector<float> onehot(15, 0.0f);
  for (int o = 0; o < 3; ++o) onehot[static_cast<std::size_t>(o * 5)] = 1.0f;
  const LearnableEnsemble select(Tensor({3, 5, 1, 1}, onehot), Tensor::zeros({1, 3, 1, 1}));
  const Tensor xi = lci_forward(inv, select);
  REQUIRE(xi.shape() == Shape{1, 3, 12, 12});
  const std::int64_t plane = 144;
  for (std::int64_t o = 0; o < 3; ++o)
    for (std::int64_t p = 0; p < plane; ++p)
      CHECK(xi.data()[static_cast<std::size_t>(o * plane + p)] == inv.phi.data()[static_cast<std::size_t>(p)]);

  const Tensor avg = lci_forward(inv, LearnableEnsemble());
  for (std::int64_t p = 0; p < plane; ++p) {
    double m = 0.0;
    for (int k = 0; k < 5; ++k) m += inv.phi.data()[static_cast<std::size_t>(k * plane + p)];
    m /= 5.0;
    for (std::int64_t o = 0; o < 3; ++o)
      CHECK(avg.data()[static_cast<std::size_t>(o * plane + p)] == doctest::Approx(m).epsilon(1e-5));
  }
  CHECK_THROWS_AS(LearnableEnsemble(Tensor::zeros({3, 4, 1, 1}), Tensor::zeros({1, 3, 1, 1})), DimensionError);
}

TEST_CASE("ensemble gradient") {
  Rng rng(37);
  const InvariantStack inv = invariants_of(testing::random_tensor({2, 3, 8, 8}, rng, 0.0, 1.0));
  const Tensor w = testing::random_tensor({3, 5, 1, 1}, rng);
  const Tensor b = testing::random_tensor({1, 3, 1, 1}, rng);
  const auto r = testing::grad_check(
      [&inv](const std::vector<Tensor>& in) { return lci_forward(inv, LearnableEnsemble(in[0], in[1])); }, {w, b});
  CHECK(r.rel_error < 1e-3);
}

TEST_CASE("full invariant path gradient reaches the image") {
  Rng rng(41);
  const Tensor img = testing::random_tensor({1, 3, 8, 8}, rng, 0.1, 0.9);
  const auto r = testing::grad_check(
      [](const std::vector<Tensor>& in) { return lci_forward(invariants_of(in[0]), LearnableEnsemble()); }, {img});
  CHECK(r.rel_error < 1e-3);
}

TEST_CASE("invariant map is bit-deterministic") {
  Rng rng(43);
  const Tensor img = testing::random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  const Tensor a = lci_forward(invariants_of(img), LearnableEnsemble());
  const Tensor b = lci_forward(invariants_of(img), LearnableEnsemble());
  for (std::size_t i = 0; i < a.data().size(); ++i) REQUIRE(a.data()[i] == b.data()[i]);
}
