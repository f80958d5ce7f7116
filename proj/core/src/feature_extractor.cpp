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

#include "dico/feature_extractor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "dico/error.hpp"
#include "dico/ops.hpp"
#include "dico/rng.hpp"

namespace dico {

namespace {

constexpr float kSlope = 0.2f;
constexpr int kKernel = 3;

std::string conv_name(const StageSpec& stage, int block, const char* what) {
  return "extractor." + stage.name + ".conv" + std::to_string(block) + "." + what;
}

// Input channel count of every conv in order.
std::vector<std::vector<int>> conv_inputs(const PyramidSpec& spec) {
  std::vector<std::vector<int>> out;
  int in = 3;
  for (const auto& stage : spec.stages) {
    std::vector<int> ins;
    for (int b = 0; b < stage.conv_blocks; ++b) {
      ins.push_back(in);
      in = stage.channels;
    }
    out.push_back(std::move(ins));
  }
  return out;
}

}  // namespace

PyramidSpec PyramidSpec::defaults(std::uint64_t seed) {
  PyramidSpec spec;
  spec.seed = seed;
  spec.stages = {{"stage1", 2, 16, false},
                 {"stage2", 2, 32, true},
                 {"stage3", 2, 64, true},
                 {"stage4", 2, 64, true}};
  return spec;
}

int PyramidSpec::downsample_count() const {
  int count = 0;
  for (const auto& s : stages) count += s.downsample ? 1 : 0;
  return count;
}

void PyramidSpec::validate() const {
  if (stages.size() < 2) throw ConfigError("pyramid needs at least two stages");
  std::set<std::string> names;
  for (const auto& s : stages) {
    if (!names.insert(s.name).second) throw ConfigError("duplicate stage name '" + s.name + "'");
    if (s.conv_blocks < 1 || s.channels < 1) throw ConfigError("stage '" + s.name + "' is empty");
  }
}

const Tensor& FeaturePyramid::at(const std::string& stage) const {
  auto it = activations.find(stage);
  if (it == activations.end()) throw ConfigError("pyramid has no stage '" + stage + "'");
  return it->second;
}

WeightSet bundled_weights(const PyramidSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  WeightSet out;
  const auto inputs = conv_inputs(spec);
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const StageSpec& stage = spec.stages[s];
    for (int b = 0; b < stage.conv_blocks; ++b) {
      const int rows = stage.channels;
      const int cols = inputs[s][b] * kKernel * kKernel;
      // QR of a zero-mean Gaussian (cols x rows) matrix; the leading
      // columns of Q are orthonormal, sum to zero, and become the flattened
      // kernels.
      Eigen::MatrixXd gauss(cols, rows);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) gauss(c, r) = rng.normal();
      gauss.rowwise() -= gauss.colwise().mean();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
      Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(cols, std::min(rows, cols));
      std::vector<float> w(static_cast<std::size_t>(rows) * cols, 0.0f);
      for (int r = 0; r < rows; ++r) {
        // Rows beyond the column count cannot be orthogonal; reuse a
        // normalised Gaussian row for them.
        if (r < cols) {
          for (int c = 0; c < cols; ++c) w[static_cast<std::size_t>(r) * cols + c] = static_cast<float>(q(c, r));
        } else {
          const double norm = gauss.col(r).norm();
          for (int c = 0; c < cols; ++c)
            w[static_cast<std::size_t>(r) * cols + c] = static_cast<float>(gauss(c, r) / norm);
        }
      }
      out.push_back({conv_name(stage, b, "weight"),
                     Tensor({rows, inputs[s][b], kKernel, kKernel}, std::move(w))});
      out.push_back({conv_name(stage, b, "bias"), Tensor::zeros({1, rows, 1, 1})});
    }
  }
  return out;
}

FeatureExtractor::FeatureExtractor(PyramidSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  weights_ = spec_.weight_file ? load_weights(*spec_.weight_file) : bundled_weights(spec_, spec_.seed);
  bind();
}

FeatureExtractor::FeatureExtractor(PyramidSpec spec, WeightSet weights)
    : spec_(std::move(spec)), weights_(std::move(weights)) {
  spec_.validate();
  bind();
}

void FeatureExtractor::bind() {
  const std::string origin = spec_.weight_file ? spec_.weight_file->string() : "<bundled extractor>";
  const auto inputs = conv_inputs(spec_);
  stages_.clear();
  for (std::size_t s = 0; s < spec_.stages.size(); ++s) {
    const StageSpec& stage = spec_.stages[s];
    std::vector<Conv> convs;
    for (int b = 0; b < stage.conv_blocks; ++b) {
      Tensor w = find_weight(weights_, conv_name(stage, b, "weight"), origin);
      Tensor bias = find_weight(weights_, conv_name(stage, b, "bias"), origin);
      if (w.shape() != Shape{stage.channels, inputs[s][b], kKernel, kKernel}) {
        throw DimensionError("channel", origin + ": " + conv_name(stage, b, "weight") + " has shape " +
                                            w.shape().str());
      }
      w.set_requires_grad(false);
      bias.set_requires_grad(false);
      convs.push_back({w, bias, (stage.downsample && b == 0) ? 2 : 1});
    }
    stages_.push_back(std::move(convs));
  }
}

float FeatureExtractor::layer_gain() {
  return static_cast<float>(std::sqrt(2.0 / (1.0 + static_cast<double>(kSlope) * kSlope)));
}

FeaturePyramid FeatureExtractor::extract(const Tensor& image, bool stop_gradient) const {
  const Shape& s = image.shape();
  if (s.c != 3) throw DimensionError("channel", "extractor expects RGB input");
  const std::int64_t factor = std::int64_t{1} << spec_.downsample_count();
  if (s.h % factor != 0) {
    throw DimensionError("height", "height " + std::to_string(s.h) + " not divisible by " + std::to_string(factor));
  }
  if (s.w % factor != 0) {
    throw DimensionError("width", "width " + std::to_string(s.w) + " not divisible by " + std::to_string(factor));
  }
  std::optional<NoGradScope> no_grad;
  if (stop_gradient) no_grad.emplace();

  FeaturePyramid pyramid;
  const float gain = layer_gain();
  Tensor x = image;
  for (std::size_t st = 0; st < stages_.size(); ++st) {
    for (const Conv& conv : stages_[st]) {
      // Stride-2 3x3 conv with padding 1 halves even extents exactly.
      x = ops::conv2d(x, conv.weight, conv.bias, conv.stride, 1);
      x = ops::leaky_relu(ops::scale(x, gain), kSlope);
    }
    pyramid.activations.emplace(spec_.stages[st].name, x);
  }
  return pyramid;
}

FeaturePyramid extract(const Tensor& image, const FeatureExtractor& extractor, bool stop_gradient) {
  return extractor.extract(image, stop_gradient);
}

}  // namespace dico
