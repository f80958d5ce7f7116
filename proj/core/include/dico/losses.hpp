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
#include <vector>

#include "dico/disentangle.hpp"
#include "dico/feature_extractor.hpp"
#include "dico/tensor.hpp"

namespace dico::loss {

struct Weights {
  float adv = 1.0f;
  float back = 1.0f;
  float fore = 1.0f;
};

struct Report {
  double l_back = 0.0;
  double l_fore = 0.0;
  double l_adv_g = 0.0;
  double l_adv_d = 0.0;
  double total_g = 0.0;
  double total_d = 0.0;
  std::map<std::string, double> back_per_stage;
  std::map<std::string, double> fore_per_stage;
  Weights weights;
  float tau = 0.07f;
  // Set when some stage had no location to contrast.
  bool fore_empty = false;
};

// CSV header and row: iter,l_back,l_fore,l_adv_g,l_adv_d,total_g,total_d
std::string csv_header();
std::string csv_row(long iteration, const Report& report);

struct StageLoss {
  Tensor total;
  std::map<std::string, Tensor> per_stage;
};

// Background regression: sum over stages of mean |M * gen - M * ref|.
StageLoss l_back(const FeaturePyramid& generated, const FeaturePyramid& reference,
                 const MaskSet& masks, const std::vector<std::string>& stages);

struct ForeLoss {
  Tensor total;
  std::map<std::string, Tensor> per_stage;
  bool empty = false;
};

/// Disentangled contrastive loss.
///
/// Channel vectors of both pyramids are l2-normalised per location and then
/// split by the generated image's masks. For each stage the anchors are the
/// hard-negative locations: each anchor's positive logit is
/// fg_gen . fg_night / tau at that location, and the negatives are the
/// background-pair logits bg_gen . bg_night / tau at all hard-negative
/// locations. Stage losses are InfoNCE means over anchors, summed.
ForeLoss l_fore(const FeaturePyramid& generated, const FeaturePyramid& night, const MaskSet& masks,
                const std::map<std::string, std::vector<std::vector<std::int64_t>>>& negatives,
                float tau, const std::vector<std::string>& stages);

// Per-location contrastive logits for one stage, each (B,1,H,W).
struct ContrastiveLogits {
  Tensor positive;
  Tensor negative;
};
ContrastiveLogits contrastive_logits(const Tensor& generated, const Tensor& night, const Tensor& mask,
                                     float tau);

enum class Side { generator, discriminator };

// Least-squares adversarial loss. Generator: mean((D(fake) - 1)^2).
// Discriminator: mean((D(real) - 1)^2) + mean(D(fake)^2); `d_real` is
// ignored on the generator side.
Tensor l_adv(const Tensor& d_real, const Tensor& d_fake, Side side);

// Weighted totals. Throws TrainingAbort naming the first non-finite term.
std::pair<double, double> total(Report& report, const Weights& weights, long iteration = 0);

}  // namespace dico::loss
