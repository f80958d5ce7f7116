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
#include <limits>

#include "dico/error.hpp"
#include "dico/optim.hpp"

using namespace dico;

namespace {

void set_grad(Tensor& t, std::vector<float> g) {
  auto buf = t.grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = g[i];
}

const Tensor& state(const WeightSet& s, const std::string& name) { return find_weight(s, name); }

}  // namespace

TEST_CASE("zero gradient leaves parameters unchanged and decays moments") {
  Tensor p({1, 1, 1, 3}, {0.5f, -1.0f, 2.0f}, true);
  optim::Adam adam({{"p", p}});
  adam.step();
  CHECK(p.data()[0] == 0.5f);
  CHECK(p.data()[1] == -1.0f);
  CHECK(p.data()[2] == 2.0f);

  set_grad(p, {1.0f, -2.0f, 0.5f});
  adam.step();
  WeightSet s1;
  adam.collect_state(s1, "");
  const float m0 = state(s1, "m.p").data()[1];
  const float v0 = state(s1, "v.p").data()[1];
  adam.step();
  WeightSet s2;
  adam.collect_state(s2, "");
  CHECK(state(s2, "m.p").data()[1] == doctest::Approx(0.5 * m0).epsilon(1e-6));
  CHECK(state(s2, "v.p").data()[1] == doctest::Approx(0.999 * v0).epsilon(1e-6));
  CHECK(std::abs(state(s2, "m.p").data()[1]) < std::abs(m0));
}

TEST_CASE("first update has magnitude lr") {
  for (float beta1 : {0.0f, 0.5f, 0.9f}) {
    Tensor p({1, 1, 1, 3}, {0.0f, 0.0f, 0.0f}, true);
    optim::Adam adam({{"p", p}}, {1e-2f, beta1, 0.999f, 1e-8f});
    set_grad(p, {3.0f, -0.01f, 250.0f});
    adam.step();
    CHECK(p.data()[0] == doctest::Approx(-1e-2).epsilon(1e-4));
    CHECK(p.data()[1] == doctest::Approx(1e-2).epsilon(1e-4));
    CHECK(p.data()[2] == doctest::Approx(-1e-2).epsilon(1e-4));
  }
}

TEST_CASE("constant gradient converges to lr times its sign") {
  Tensor p({1, 1, 1, 2}, {0.0f, 0.0f}, true);
  optim::Adam adam({{"p", p}});
  float last[2] = {0.0f, 0.0f};
  for (int i = 0; i < 500; ++i) {
    set_grad(p, {0.3f, -7.0f});
    last[0] = p.data()[0];
    last[1] = p.data()[1];
    adam.step();
  }
  CHECK((p.data()[0] - last[0]) == doctest::Approx(-2e-4).epsilon(1e-3));
  CHECK((p.data()[1] - last[1]) == doctest::Approx(2e-4).epsilon(1e-3));
  CHECK(adam.steps() == 500);
}

TEST_CASE("non-finite gradient aborts") {
  Tensor p({1, 1, 1, 1}, {1.0f}, true);
  optim::Adam adam({{"w", p}});
  set_grad(p, {std::numeric_limits<float>::quiet_NaN()});
  try {
    adam.step(42);
    FAIL("expected an abort");
  } catch (const TrainingAbort& e) {
    CHECK(e.iteration() == 42);
    CHECK(e.term().find("w") != std::string::npos);
  }
  CHECK(p.data()[0] == 1.0f);
  CHECK_THROWS_AS(optim::Adam({{"w", p}}, {0.0f}), ParameterError);
}

TEST_CASE("state round trip") {
  Tensor p({1, 1, 1, 2}, {1.0f, 2.0f}, true);
  Tensor q({1, 1, 1, 2}, {1.0f, 2.0f}, true);
  optim::Adam a({{"p", p}});
  optim::Adam b({{"p", q}});
  for (int i = 0; i < 3; ++i) {
    set_grad(p, {0.1f * static_cast<float>(i), -1.0f});
    a.step();
  }
  WeightSet s;
  a.collect_state(s, "opt.");
  b.load_state(s, "opt.", "<test>");
  q.mutable_data()[0] = p.data()[0];
  q.mutable_data()[1] = p.data()[1];
  CHECK(b.steps() == 3);
  set_grad(p, {0.5f, 0.5f});
  set_grad(q, {0.5f, 0.5f});
  a.step();
  b.step();
  CHECK(p.data()[0] == q.data()[0]);
  CHECK(p.data()[1] == q.data()[1]);
  CHECK_THROWS_AS(b.load_state(s, "other.", "<test>"), IoError);
}
