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

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "dico/tensor.hpp"
#include "dico/weights_io.hpp"

// Photometric colour invariants built on the Gaussian colour model, and the
// learnable linear ensemble that mixes them.
namespace dico::color {

inline constexpr double kDefaultSigma = 1.0;
inline constexpr double kDefaultEpsilon = 1e-4;

// Channel order of an invariant stack.
inline constexpr std::array<std::string_view, 5> kInvariantNames = {"E", "W", "C", "H", "N"};

// RGB -> (E, E_l, E_ll) linear map, row-major.
inline constexpr std::array<float, 9> kGaussianColorMatrix = {
    0.06f, 0.63f, 0.27f,   //
    0.30f, 0.04f, -0.35f,  //
    0.34f, -0.60f, 0.17f,
};

// Spectral intensity and its first and second spectral derivatives, each
// (B,1,H,W).
struct GaussianColorPlanes {
  Tensor e;
  Tensor el;
  Tensor ell;
};

// Gaussian-smoothed planes and their spatial derivatives at scale sigma.
// Suffix _i is the row (height) direction, _j the column (width) direction.
struct DerivativeSet {
  Tensor e, el, ell;
  Tensor e_i, e_j;
  Tensor el_i, el_j;
  Tensor ell_i, ell_j;
  double sigma = kDefaultSigma;
};

// Phi: (B,5,H,W) with channels (E, W, C, H, N).
struct InvariantStack {
  Tensor phi;
  double sigma = kDefaultSigma;
  double epsilon = kDefaultEpsilon;
};

GaussianColorPlanes gaussian_color_model(const Tensor& rgb);

// Separable Gaussian derivative filtering with replicate borders. The
// derivative taps are normalised so that a unit ramp yields exactly 1.
DerivativeSet gaussian_derivatives(const GaussianColorPlanes& planes, double sigma = kDefaultSigma);

// Denominators E, E^2, E^3 use max(E, epsilon); the H denominator uses
// max(E_l^2 + E_ll^2, epsilon^2).
InvariantStack compute_invariants(const DerivativeSet& derivs, double epsilon = kDefaultEpsilon);

// gaussian_color_model -> gaussian_derivatives -> compute_invariants.
InvariantStack invariants_of(const Tensor& rgb, double sigma = kDefaultSigma,
                             double epsilon = kDefaultEpsilon);

// One-sided taps t = 0..radius of the normalised Gaussian (sum over the full
// symmetric kernel is 1).
std::vector<float> smoothing_taps(double sigma);
// One-sided taps t = 0..radius of the cross-correlation derivative kernel
// (odd: tap(-t) = -tap(t), tap(0) = 0).
std::vector<float> derivative_taps(double sigma);
int kernel_radius(double sigma);

enum class Axis { rows, cols };
enum class Parity { even, odd };

// Differentiable 1-D correlation along `axis` with a symmetric (even) or
// antisymmetric (odd) kernel given by its one-sided taps; replicate borders.
// Odd kernels are evaluated as sum_t k_t (x[+t] - x[-t]), so constant input
// yields exactly zero.
Tensor filter_1d(const Tensor& x, std::span<const float> taps, Axis axis, Parity parity);

/// Learnable mixture xi = Lambda * Phi realised as a 1x1 convolution from
/// the five invariants to three output channels.
class LearnableEnsemble {
 public:
  static constexpr int kOutputChannels = 3;

  // Every weight 1/5, zero bias.
  LearnableEnsemble();
  LearnableEnsemble(Tensor weight, Tensor bias);

  Tensor forward(const InvariantStack& stack) const;

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

  // Entries named "<prefix>weight" and "<prefix>bias".
  void collect(WeightSet& out, const std::string& prefix) const;
  void load(const WeightSet& in, const std::string& prefix, const std::string& origin);

 private:
  Tensor weight_;  // (3,5,1,1)
  Tensor bias_;    // (1,3,1,1)
};

Tensor lci_forward(const InvariantStack& stack, const LearnableEnsemble& ensemble);

}  // namespace dico::color
