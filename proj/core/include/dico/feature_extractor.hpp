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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dico/tensor.hpp"
#include "dico/weights_io.hpp"

namespace dico {

struct StageSpec {
  std::string name;
  int conv_blocks = 2;
  int channels = 0;
  // Halve the spatial extents on entry to the stage.
  bool downsample = false;
};

struct PyramidSpec {
  std::vector<StageSpec> stages;
  // Bundled deterministic weights from `seed` unless a weight file is given.
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> weight_file;

  // stage1..stage4: (conv3x3 -> leaky-relu 0.2) x 2, channels 16/32/64/64,
  // stride-2 downsampling on entry to stages 2-4.
  static PyramidSpec defaults(std::uint64_t seed = 0);

  int downsample_count() const;
  void validate() const;
};

// Stage name -> (B, C_k, H_k, W_k) activation.
struct FeaturePyramid {
  std::map<std::string, Tensor> activations;
  const Tensor& at(const std::string& stage) const;
};

// Orthogonal kernels (unit-norm, mutually orthogonal, zero-sum flattened
// rows) and zero biases for every conv of `spec`, generated from `seed`.
WeightSet bundled_weights(const PyramidSpec& spec, std::uint64_t seed);

/// Frozen convolutional feature pyramid.
///
/// Weights never require gradients. With stop_gradient false the pyramid is
/// recorded on the active tape, so gradients reach the input image.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(PyramidSpec spec);
  FeatureExtractor(PyramidSpec spec, WeightSet weights);

  FeaturePyramid extract(const Tensor& image, bool stop_gradient) const;

  const PyramidSpec& spec() const { return spec_; }
  const WeightSet& weights() const { return weights_; }

  // Post-conv gain sqrt(2 / (1 + slope^2)) that keeps activation variance
  // roughly constant through leaky-relu layers with unit-norm kernels.
  static float layer_gain();

 private:
  void bind();

  struct Conv {
    Tensor weight;
    Tensor bias;
    int stride;
  };
  PyramidSpec spec_;
  WeightSet weights_;
  std::vector<std::vector<Conv>> stages_;
};

FeaturePyramid extract(const Tensor& image, const FeatureExtractor& extractor, bool stop_gradient);

}  // namespace dico
