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

#include <benchmark/benchmark.h>

#include <vector>

#include "dico/color_invariants.hpp"
#include "dico/data.hpp"
#include "dico/feature_extractor.hpp"
#include "dico/image.hpp"
#include "dico/ops.hpp"
#include "dico/pipeline.hpp"
#include "dico/rng.hpp"

namespace {

using namespace dico;

Tensor uniform(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(static_cast<std::size_t>(s.numel()));
  for (float& x : v) x = static_cast<float>(rng.uniform());
  return Tensor(s, std::move(v));
}

void BM_Conv2dForward(benchmark::State& state) {
  const std::int64_t size = state.range(0);
  const Tensor x = uniform({1, 32, size, size}, 1);
  const Tensor w = uniform({32, 32, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, std::nullopt, 1, 1));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32)->Arg(64);

void BM_Conv2dBackward(benchmark::State& state) {
  const std::int64_t size = state.range(0);
  const Tensor x = uniform({1, 32, size, size}, 1);
  Tensor w = uniform({32, 32, 3, 3}, 2);
  w.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(ops::sum(ops::conv2d(x, w, std::nullopt, 1, 1)));
    w.zero_grad();
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(16)->Arg(32)->Arg(64);

void BM_Invariants(benchmark::State& state) {
  const std::int64_t size = state.range(0);
  const Tensor img = uniform({1, 3, size, size}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(color::invariants_of(img));
}
BENCHMARK(BM_Invariants)->Arg(64)->Arg(128);

void BM_Extract(benchmark::State& state) {
  const FeatureExtractor ex(PyramidSpec::defaults());
  const Tensor img = uniform({1, 3, 64, 64}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(ex.extract(img, true));
}
BENCHMARK(BM_Extract);

void BM_TrainStep(benchmark::State& state) {
  SyntheticSceneSpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.day_frames = 4;
  spec.night_frames = 4;
  const SyntheticScene scene = generate_synthetic_scene(spec);
  TrainConfig config;
  Trainer trainer(config);
  const Tensor reference = to_tensor(synth_background(scene.day));
  trainer.set_reference(reference);
  Batch batch;
  batch.night = to_tensor(scene.night[0]);
  batch.day = to_tensor(scene.day[0]);
  batch.reference = reference;
  batch.night_indices = {0};
  batch.day_indices = {0};
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(batch));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
