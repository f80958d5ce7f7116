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
#include <functional>
#include <string>
#include <vector>

#include "dico/color_invariants.hpp"
#include "dico/rng.hpp"
#include "dico/tensor.hpp"
#include "dico/weights_io.hpp"

namespace dico::nn {

struct Conv2d {
  Tensor weight;  // (out, in, k, k)
  Tensor bias;    // (1, out, 1, 1)
  int stride = 1;
  int padding = 0;

  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, int padding);
  Tensor forward(const Tensor& x) const;
};

struct InstanceNorm {
  Tensor gamma;  // (1, C, 1, 1), ones
  Tensor beta;   // (1, C, 1, 1), zeros
  float eps = 1e-5f;

  InstanceNorm() = default;
  explicit InstanceNorm(int channels);
  Tensor forward(const Tensor& x) const;
};

// Visits every trainable tensor with its qualified name.
using ParamVisitor = std::function<void(const std::string& name, Tensor& param)>;

struct ResidualBlock {
  Conv2d conv1, conv2;
  InstanceNorm norm1, norm2;

  explicit ResidualBlock(int channels = 0);
  // x + norm2(conv2(relu(norm1(conv1(x)))))
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct GeneratorConfig {
  int input_channels = 6;
  int base_channels = 32;
  int residual_blocks = 4;
};

/// ResNet-style generator: 7x7 stem, two stride-2 downsampling convs,
/// residual blocks at 4x base width, two (up2 -> 3x3 conv) stages, and a
/// 7x7 tanh head. Instance norm follows every conv except the head.
class Generator {
 public:
  explicit Generator(GeneratorConfig config = {});

  // Output (B,3,H,W) in (-1, 1). `input` is RGB, optionally concatenated
  // with the invariant mixture.
  Tensor forward(const Tensor& input) const;
  Tensor forward(const Tensor& rgb, const Tensor& xi) const;

  void visit(const ParamVisitor& f);
  const GeneratorConfig& config() const { return config_; }
  std::vector<ResidualBlock>& blocks() { return blocks_; }

 private:
  GeneratorConfig config_;
  Conv2d stem_, down1_, down2_, up1_, up2_, head_;
  InstanceNorm stem_norm_, down1_norm_, down2_norm_, up1_norm_, up2_norm_;
  std::vector<ResidualBlock> blocks_;
};

/// PatchGAN discriminator: three 4x4 stride-2 convs (3->32->64->128, leaky
/// relu 0.2, instance norm after the second and third) and a 4x4 stride-2
/// conv to one channel of patch logits.
class Discriminator {
 public:
  static constexpr std::int64_t kMinExtent = 32;

  Discriminator();
  Tensor forward(const Tensor& image) const;
  void visit(const ParamVisitor& f);

 private:
  Conv2d c1_, c2_, c3_, out_;
  InstanceNorm n2_, n3_;
};

struct Networks {
  Generator generator;
  Discriminator discriminator;
  color::LearnableEnsemble ensemble;

  // gen.*, lci.* trainable tensors.
  void visit_generator(const ParamVisitor& f);
  void visit_discriminator(const ParamVisitor& f);

  // All tensors under their checkpoint names (gen., disc., lci.).
  WeightSet collect();
  void load(const WeightSet& weights, const std::string& origin);
};

// Conv weights ~ N(0, 0.02), biases 0, norm affine (1, 0), ensemble 1/5.
Networks init_networks(std::uint64_t seed, GeneratorConfig config = {});

}  // namespace dico::nn
