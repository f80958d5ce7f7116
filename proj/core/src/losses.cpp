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

#include "dico/losses.hpp"

#include <cmath>
#include <cstdio>

#include "dico/error.hpp"
#include "dico/ops.hpp"

namespace dico::loss {

using namespace dico::ops;

std::string csv_header() { return "iter,l_back,l_fore,l_adv_g,l_adv_d,total_g,total_d"; }

std::string csv_row(long iteration, const Report& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", iteration, r.l_back, r.l_fore,
                r.l_adv_g, r.l_adv_d, r.total_g, r.total_d);
  return buf;
}

StageLoss l_back(const FeaturePyramid& generated, const FeaturePyramid& reference,
                 const MaskSet& masks, const std::vector<std::string>& stages) {
  if (stages.empty()) throw ConfigError("l_back: no stages configured");
  StageLoss out;
  for (const auto& stage : stages) {
    const Tensor& gen = generated.at(stage);
    const Tensor& ref = reference.at(stage);
    if (gen.shape() != ref.shape()) {
      throw ConfigError("l_back: stage '" + stage + "' shapes differ: " + gen.shape().str() + " vs " +
                        ref.shape().str());
    }
    const Tensor& m = masks.mask(stage);
    const Tensor term = mean(ops::abs(sub(mul(gen, m), mul(ref, m))));
    out.per_stage.emplace(stage, term);
    out.total = out.total.defined() ? add(out.total, term) : term;
  }
  return out;
}

ContrastiveLogits contrastive_logits(const Tensor& generated, const Tensor& night, const Tensor& mask,
                                     float tau) {
  if (!(tau > 0.0f)) throw ParameterError("temperature must be positive");
  const Tensor zg = l2_normalize_channels(generated);
  const Tensor zn = l2_normalize_channels(night);
  const auto [bg_g, fg_g] = split(zg, mask);
  const auto [bg_n, fg_n] = split(zn, mask);
  const float inv_tau = 1.0f / tau;
  return {scale(channel_sum(mul(fg_g, fg_n)), inv_tau), scale(channel_sum(mul(bg_g, bg_n)), inv_tau)};
}

ForeLoss l_fore(const FeaturePyramid& generated, const FeaturePyramid& night, const MaskSet& masks,
                const std::map<std::string, std::vector<std::vector<std::int64_t>>>& negatives,
                float tau, const std::vector<std::string>& stages) {
  if (!(tau > 0.0f)) throw ParameterError("temperature must be positive");
  ForeLoss out;
  for (const auto& stage : stages) {
    auto it = negatives.find(stage);
    const bool none = it == negatives.end() || it->second.empty() || it->second.front().empty();
    if (none) {
      out.empty = true;
      out.per_stage.emplace(stage, Tensor::scalar(0.0f));
      continue;
    }
    const ContrastiveLogits logits =
        contrastive_logits(generated.at(stage), night.at(stage), masks.mask(stage), tau);
    const Tensor pos = gather_spatial(logits.positive, it->second);
    const Tensor neg = gather_spatial(logits.negative, it->second);
    const Tensor term = info_nce(pos, neg);
    out.per_stage.emplace(stage, term);
    out.total = out.total.defined() ? add(out.total, term) : term;
  }
  if (!out.total.defined()) out.total = Tensor::scalar(0.0f);
  return out;
}

Tensor l_adv(const Tensor& d_real, const Tensor& d_fake, Side side) {
  if (side == Side::generator) return mean(square(add_scalar(d_fake, -1.0f)));
  return add(mean(square(add_scalar(d_real, -1.0f))), mean(square(d_fake)));
}

std::pair<double, double> total(Report& r, const Weights& w, long iteration) {
  const std::pair<const char*, double> parts[] = {
      {"l_adv_g", r.l_adv_g}, {"l_back", r.l_back}, {"l_fore", r.l_fore}, {"l_adv_d", r.l_adv_d}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) throw TrainingAbort(name, iteration, "non-finite loss value");
  }
  r.weights = w;
  r.total_g = static_cast<double>(w.adv) * r.l_adv_g + static_cast<double>(w.back) * r.l_back +
              static_cast<double>(w.fore) * r.l_fore;
  r.total_d = r.l_adv_d;
  return {r.total_g, r.total_d};
}

}  // namespace dico::loss
