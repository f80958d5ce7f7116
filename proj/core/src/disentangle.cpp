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

#include "dico/disentangle.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

#include "dico/error.hpp"
#include "dico/ops.hpp"

namespace dico {

const Tensor& MaskSet::mask(const std::string& stage) const {
  auto it = masks.find(stage);
  if (it == masks.end()) throw ConfigError("no mask for stage '" + stage + "'");
  return it->second;
}

const SimilarityMap& MaskSet::scores(const std::string& stage) const {
  auto it = similarity.find(stage);
  if (it == similarity.end()) throw ConfigError("no similarity map for stage '" + stage + "'");
  return it->second;
}

SimilarityMap elesim(const Tensor& feat, const Tensor& ref, const std::string& stage, bool attach) {
  if (feat.shape() != ref.shape()) {
    throw DimensionError(feat.shape().c != ref.shape().c ? "channel" : "spatial",
                         "elesim: " + feat.shape().str() + " vs reference " + ref.shape().str());
  }
  const Tensor fixed_ref = ref.requires_grad() ? ops::detach(ref) : ref;
  std::optional<NoGradScope> no_grad;
  if (!attach) no_grad.emplace();
  return {ops::pearson_channels(feat, fixed_ref), stage};
}

Tensor to_mask(const SimilarityMap& similarity, float gamma, float center) {
  if (!(gamma > 0.0f)) throw ParameterError("mask gain must be positive");
  return ops::sigmoid(ops::scale(ops::add_scalar(similarity.scores, -center), gamma));
}

std::pair<Tensor, Tensor> split(const Tensor& feat, const Tensor& mask) {
  const Shape& f = feat.shape();
  const Shape& m = mask.shape();
  if (m.c != 1 || m.n != f.n || m.h != f.h || m.w != f.w) {
    throw DimensionError(m.c != 1 ? "channel" : "spatial",
                         "split: mask " + m.str() + " does not broadcast over " + f.str());
  }
  // The part weighted by max(M, 1 - M) is a product, the other is feat minus it.
  const auto fv = feat.data();
  const auto mv = mask.data();
  const std::int64_t plane = f.plane();
  std::vector<float> bg(fv.size()), fg(fv.size());
  for (std::int64_t n = 0; n < f.n; ++n)
    for (std::int64_t c = 0; c < f.c; ++c)
      for (std::int64_t p = 0; p < plane; ++p) {
        const std::size_t i = static_cast<std::size_t>((n * f.c + c) * plane + p);
        const float m = mv[static_cast<std::size_t>(n * plane + p)];
        if (m >= 0.5f) {
          bg[i] = m * fv[i];
          fg[i] = fv[i] - bg[i];
        } else {
          fg[i] = (1.0f - m) * fv[i];
          bg[i] = fv[i] - fg[i];
        }
      }
  auto backward = [feat, mask, f, plane](float sign) {
    return [feat, mask, f, plane, sign](std::span<const float> g) {
      Tensor tf = feat;
      Tensor tm = mask;
      const auto fv = feat.data();
      const auto mv = mask.data();
      std::span<float> gf = tf.requires_grad() ? tf.grad_buffer() : std::span<float>{};
      std::span<float> gm = tm.requires_grad() ? tm.grad_buffer() : std::span<float>{};
      for (std::int64_t n = 0; n < f.n; ++n)
        for (std::int64_t c = 0; c < f.c; ++c)
          for (std::int64_t p = 0; p < plane; ++p) {
            const std::size_t i = static_cast<std::size_t>((n * f.c + c) * plane + p);
            const std::size_t k = static_cast<std::size_t>(n * plane + p);
            const float w = sign > 0.0f ? mv[k] : 1.0f - mv[k];
            if (!gf.empty()) gf[i] += g[i] * w;
            if (!gm.empty()) gm[k] += sign * g[i] * fv[i];
          }
    };
  };
  Tensor background = detail::make_result(f, std::move(bg), {feat, mask}, backward(1.0f));
  Tensor foreground = detail::make_result(f, std::move(fg), {feat, mask}, backward(-1.0f));
  return {background, foreground};
}

Tensor binarize(const Tensor& mask, float threshold) {
  std::vector<float> out(static_cast<std::size_t>(mask.numel()));
  const auto mv = mask.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mv[i] > threshold ? 1.0f : 0.0f;
  return Tensor(mask.shape(), std::move(out));
}

std::vector<std::vector<std::int64_t>> hard_negative_select(const SimilarityMap& similarity,
                                                            std::int64_t count) {
  const Shape& s = similarity.scores.shape();
  const std::int64_t plane = s.plane();
  if (count <= 0) throw ParameterError("hard negative count must be positive");
  if (count > plane) {
    throw ParameterError("hard negative count " + std::to_string(count) + " exceeds " +
                         std::to_string(plane) + " locations");
  }
  const auto pv = similarity.scores.data();
  std::vector<std::vector<std::int64_t>> out;
  for (std::int64_t n = 0; n < s.n; ++n) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(plane));
    std::iota(order.begin(), order.end(), 0);
    const float* p = pv.data() + n * plane;
    std::stable_sort(order.begin(), order.end(), [p](std::int64_t a, std::int64_t b) { return p[a] < p[b]; });
    order.resize(static_cast<std::size_t>(count));
    out.push_back(std::move(order));
  }
  return out;
}

std::int64_t default_negative_count(std::int64_t locations) {
  return std::min<std::int64_t>(64, (locations + 3) / 4);
}

MaskSet compute_masks(const FeaturePyramid& image, const FeaturePyramid& reference,
                      const std::vector<std::string>& stages, const MaskParams& params, bool attach) {
  MaskSet set;
  set.params = params;
  for (const auto& stage : stages) {
    SimilarityMap p = elesim(image.at(stage), reference.at(stage), stage, attach);
    std::optional<NoGradScope> no_grad;
    if (!attach) no_grad.emplace();
    set.masks.emplace(stage, to_mask(p, params.gamma, params.center));
    set.similarity.emplace(stage, std::move(p));
  }
  return set;
}

}  // namespace dico
