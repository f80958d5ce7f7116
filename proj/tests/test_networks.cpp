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
#include <set>

#include "dico/color_invariants.hpp"
#include "dico/error.hpp"
#include "dico/feature_extractor.hpp"
#include "dico/networks.hpp"
#include "dico/ops.hpp"
#include "gradcheck.hpp"

using namespace dico;

namespace {

nn::GeneratorConfig tiny() { return {6, 4, 1}; }

std::vector<float> flatten(nn::Networks& nets) {
  std::vector<float> out;
  for (const auto& nt : nets.collect()) out.insert(out.end(), nt.tensor.data().begin(), nt.tensor.data().end());
  return out;
}

}  // namespace

TEST_CASE("generator shapes and range") {
  nn::Networks nets = nn::init_networks(1);
  Rng rng(2);
  const Tensor rgb = testing::random_tensor({1, 3, 64, 64}, rng, 0.0, 1.0);
  const Tensor xi = testing::random_tensor({1, 3, 64, 64}, rng);
  const Tensor out = nets.generator.forward(rgb, xi);
  CHECK(out.shape() == Shape{1, 3, 64, 64});
  for (float v : out.data()) {
    CHECK(v > -1.0f);
    CHECK(v < 1.0f);
  }
  CHECK_THROWS_AS(nets.generator.forward(Tensor::zeros({1, 3, 64, 64})), DimensionError);
  CHECK_THROWS_AS(nets.generator.forward(Tensor::zeros({1, 6, 62, 64})), DimensionError);
}

TEST_CASE("zeroed residual block is the identity") {
  nn::ResidualBlock block(8);
  Rng rng(3);
  for (Tensor* t : {&block.conv1.weight, &block.conv2.weight}) {
    auto d = t->mutable_data();
    for (float& v : d) v = static_cast<float>(rng.normal(0.0, 0.1));
  }
  block.visit("b", [](const std::string&, Tensor& p) {
    for (float& v : p.mutable_data()) v = 0.0f;
  });
  const Tensor x = testing::random_tensor({2, 8, 6, 6}, rng);
  const Tensor y = block.forward(x);
  for (std::size_t i = 0; i < x.data().size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("discriminator shapes and determinism") {
  nn::Networks nets = nn::init_networks(4);
  Rng rng(5);
  const Tensor img = testing::random_tensor({1, 3, 64, 64}, rng, 0.0, 1.0);
  const Tensor a = nets.discriminator.forward(img);
  CHECK(a.shape() == Shape{1, 1, 4, 4});
  const Tensor b = nets.discriminator.forward(img);
  for (std::size_t i = 0; i < a.data().size(); ++i) CHECK(a.data()[i] == b.data()[i]);
  CHECK_THROWS_AS(nets.discriminator.forward(Tensor::zeros({1, 3, 16, 16})), DimensionError);
}

TEST_CASE("discriminator input gradient") {
  nn::Networks nets = nn::init_networks(6);
  Rng rng(7);
  const Tensor img = testing::random_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
  const auto r = testing::grad_check(
      [&nets](const std::vector<Tensor>& in) { return nets.discriminator.forward(in[0]); }, {img}, 7, 1e-2);
  CHECK(r.rel_error < 1e-3);
}

TEST_CASE("initialisation is seeded") {
  nn::Networks a = nn::init_networks(11);
  nn::Networks b = nn::init_networks(11);
  nn::Networks c = nn::init_networks(12);
  CHECK(flatten(a) == flatten(b));
  CHECK(flatten(a) != flatten(c));

  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  auto accumulate = [&](const std::string& name, Tensor& t) {
    const bool conv = name.size() > 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
    if (!conv) return;
    for (float v : t.data()) {
      s += v;
      s2 += static_cast<double>(v) * v;
      ++n;
    }
  };
  a.generator.visit(accumulate);
  a.discriminator.visit(accumulate);
  REQUIRE(n >= 10000);
  const double sd = std::sqrt(s2 / static_cast<double>(n) - (s / static_cast<double>(n)) * (s / static_cast<double>(n)));
  CHECK(sd >= 0.015);
  CHECK(sd <= 0.025);

  for (float v : a.ensemble.weight().data()) CHECK(v == 0.2f);
  for (float v : a.ensemble.bias().data()) CHECK(v == 0.0f);
}

TEST_CASE("parameter naming") {
  nn::Networks nets = nn::init_networks(0);
  std::set<std::string> gen, disc;
  nets.visit_generator([&](const std::string& name, Tensor&) { gen.insert(name); });
  nets.visit_discriminator([&](const std::string& name, Tensor&) { disc.insert(name); });
  CHECK(gen.count("lci.weight") == 1);
  CHECK(gen.count("gen.res0.conv1.weight") == 1);
  CHECK(disc.count("disc.out.weight") == 1);
  for (const auto& n : disc) CHECK(gen.count(n) == 0);
  CHECK(nets.collect().size() == gen.size() + disc.size());

  nn::Networks other = nn::init_networks(1);
  other.load(nets.collect(), "<test>");
  CHECK(flatten(other) == flatten(nets));
}

TEST_CASE("instance norm statistics") {
  Rng rng(8);
  const Tensor x = testing::random_normal({2, 4, 16, 16}, rng, 3.0);
  const Tensor y = ops::instance_norm(ops::add_scalar(x, 2.0f), Tensor::full({1, 4, 1, 1}, 1.0f), Tensor::zeros({1, 4, 1, 1}));
  for (std::int64_t nc = 0; nc < 8; ++nc) {
    double m = 0.0, m2 = 0.0;
    for (std::int64_t p = 0; p < 256; ++p) {
      const double v = y.data()[static_cast<std::size_t>(nc * 256 + p)];
      m += v;
      m2 += v * v;
    }
    m /= 256.0;
    const double sd = std::sqrt(m2 / 256.0 - m * m);
    CHECK(std::abs(m) < 1e-4);
    CHECK(std::abs(sd - 1.0) < 1e-3);
  }
}

TEST_CASE("end-to-end generator path gradient") {
  nn::Networks nets = nn::init_networks(9, tiny());
  const FeatureExtractor ex(PyramidSpec::defaults());
  Rng rng(10);
  const Tensor night = testing::random_tensor({1, 3, 16, 16}, rng, 0.1, 0.9);
  const Tensor target = ex.extract(testing::random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0), true).at("stage3");
  const auto f = [&](const std::vector<Tensor>& in) {
    const Tensor xi = color::lci_forward(color::invariants_of(in[0]), nets.ensemble);
    const Tensor out = ops::scale(ops::add_scalar(nets.generator.forward(in[0], xi), 1.0f), 0.5f);
    return ops::mean(ops::square(ops::sub(ex.extract(out, false).at("stage3"), target)));
  };
  const auto r = testing::grad_check(f, {night});
  CHECK(r.rel_error < 1e-2);
}
