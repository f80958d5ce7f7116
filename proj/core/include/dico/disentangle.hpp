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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dico/feature_extractor.hpp"
#include "dico/tensor.hpp"

// Foreground/background disentanglement against a fixed background
// reference: per-location Pearson similarity, soft masks, feature split.
namespace dico {

// Per-location Pearson coefficients P_k, (B,1,H_k,W_k), values in [-1, 1].
struct SimilarityMap {
  Tensor scores;
  std::string stage;
};

struct MaskParams {
  float gamma = 10.0f;
  float center = 0.5f;
  float threshold = 0.5f;
};

// Per-stage similarity maps and soft background masks M_k = sigmoid(gamma (P_k - s0)).
struct MaskSet {
  std::map<std::string, SimilarityMap> similarity;
  std::map<std::string, Tensor> masks;
  MaskParams params;

  const Tensor& mask(const std::string& stage) const;
  const SimilarityMap& scores(const std::string& stage) const;
};

// Pearson correlation across channels between `feat` and `ref` at every
// location, each vector centred by its own mean. The reference never
// receives gradients; `attach` controls whether the result is recorded
// through `feat`.
SimilarityMap elesim(const Tensor& feat, const Tensor& ref, const std::string& stage = {},
                     bool attach = true);

// sigmoid(gamma * (P - center)); high similarity -> background (mask near 1).
Tensor to_mask(const SimilarityMap& similarity, float gamma, float center);

// (mask * feat, (1 - mask) * feat), mask broadcast over channels.
std::pair<Tensor, Tensor> split(const Tensor& feat, const Tensor& mask);

// 1 where mask > threshold, else 0. Not differentiable.
Tensor binarize(const Tensor& mask, float threshold);

// For every sample, the `count` flat row-major locations with the highest
// foreground probability (lowest similarity), ties broken by row-major
// order.
std::vector<std::vector<std::int64_t>> hard_negative_select(const SimilarityMap& similarity,
                                                            std::int64_t count);

// min(64, ceil(0.25 * locations)).
std::int64_t default_negative_count(std::int64_t locations);

MaskSet compute_masks(const FeaturePyramid& image, const FeaturePyramid& reference,
                      const std::vector<std::string>& stages, const MaskParams& params,
                      bool attach = true);

}  // namespace dico
