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
#include <optional>
#include <span>
#include <vector>

#include "dico/tensor.hpp"

// Differentiable tensor operations. Every function records itself on the
// active tape when one of its inputs requires a gradient.
namespace dico::ops {

// Added to denominators of div, arguments of log, and the derivative of sqrt.
inline constexpr float kStabilizer = 1e-8f;

// Cross-correlation with zero padding. weight is (out, in, kh, kw).
Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              int stride = 1, int padding = 0);

// Binary ops accept equal shapes, or a right-hand operand of shape
// (1,C,1,1), (N,1,H,W) or (1,1,1,1) broadcast against the left-hand one.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a / (b + kStabilizer)
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, float factor);
Tensor add_scalar(const Tensor& x, float value);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, float slope = 0.2f);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
// log(x + kStabilizer)
Tensor log(const Tensor& x);
// sqrt(max(x, 0)); derivative 0.5 / sqrt(x + kStabilizer).
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
// 1 / x without stabilisation; callers keep x away from zero.
Tensor reciprocal(const Tensor& x);
// max(x, floor); zero gradient where clamped.
Tensor clamp_min(const Tensor& x, float floor);

// While alive, records on this thread which side of its kink every element of
// relu, leaky_relu, abs and clamp_min falls on, in call order. In replay mode
// those ops take the recorded sides instead, so the traced function becomes
// smooth around the point it was recorded at.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  const std::vector<bool>& branches() const { return branches_; }
  void record();
  void replay();
  // Side for the next n elements.
  std::vector<bool> next(std::span<const float> x, float kink);

 private:
  std::vector<bool> branches_;
  std::size_t cursor_ = 0;
  bool replaying_ = false;
  BranchTrace* previous_;
};

// Scalar results have shape (1,1,1,1).
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// (N,C,H,W) -> (N,1,H,W)
Tensor channel_mean(const Tensor& x);
Tensor channel_sum(const Tensor& x);
// (N,C,H,W) -> (N,C,1,1)
Tensor spatial_mean(const Tensor& x);

enum class Resample { up2, down2 };
// Nearest-neighbour resampling by a factor of two.
Tensor resample(const Tensor& x, Resample factor);

Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t count);

// Per-(sample, channel) normalisation over the spatial plane followed by a
// per-channel affine (gamma, beta of shape (1,C,1,1)).
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

// Pearson correlation across channels at each spatial location.
// (N,C,H,W) x (N,C,H,W) -> (N,1,H,W); denominator stabilised by eps.
Tensor pearson_channels(const Tensor& a, const Tensor& b, float eps = kStabilizer);

// x / (||x||_channels + eps) at each location.
Tensor l2_normalize_channels(const Tensor& x, float eps = 1e-8f);

// Gathers spatial locations (row-major flat indices), one list per sample,
// all lists of equal length K: (N,C,H,W) -> (N,C,1,K).
Tensor gather_spatial(const Tensor& x, const std::vector<std::vector<std::int64_t>>& indices);

// Mean over anchors of -log(exp(pos_a) / (exp(pos_a) + sum_k exp(neg_k))).
// pos is (N,1,1,A), neg is (N,1,1,K); negatives are shared by the anchors
// of a sample. Evaluated with a max-shifted log-sum-exp.
Tensor info_nce(const Tensor& pos, const Tensor& neg);

// Copy of x with no tape history.
Tensor detach(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

}  // namespace dico::ops
