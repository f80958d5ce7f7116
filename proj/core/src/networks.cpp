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

#include "dico/networks.hpp"

#include <string>

#include "dico/error.hpp"
#include "dico/ops.hpp"

namespace dico::nn {

using namespace dico::ops;

Conv2d::Conv2d(int in, int out, int kernel, int stride_, int padding_)
    : weight(Tensor::zeros({out, in, kernel, kernel}, true)),
      bias(Tensor::zeros({1, out, 1, 1}, true)),
      stride(stride_),
      padding(padding_) {}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }

InstanceNorm::InstanceNorm(int channels)
    : gamma(Tensor::full({1, channels, 1, 1}, 1.0f, true)), beta(Tensor::zeros({1, channels, 1, 1}, true)) {}

Tensor InstanceNorm::forward(const Tensor& x) const { return instance_norm(x, gamma, beta, eps); }

ResidualBlock::ResidualBlock(int channels)
    : conv1(channels, channels, 3, 1, 1),
      conv2(channels, channels, 3, 1, 1),
      norm1(channels),
      norm2(channels) {}

Tensor ResidualBlock::forward(const Tensor& x) const {
  const Tensor h = relu(norm1.forward(conv1.forward(x)));
  return add(x, norm2.forward(conv2.forward(h)));
}

namespace {

void visit_conv(const std::string& prefix, Conv2d& c, const ParamVisitor& f) {
  f(prefix + ".weight", c.weight);
  f(prefix + ".bias", c.bias);
}

void visit_norm(const std::string& prefix, InstanceNorm& n, const ParamVisitor& f) {
  f(prefix + ".gamma", n.gamma);
  f(prefix + ".beta", n.beta);
}

}  // namespace

void ResidualBlock::visit(const std::string& prefix, const ParamVisitor& f) {
  visit_conv(prefix + ".conv1", conv1, f);
  visit_norm(prefix + ".norm1", norm1, f);
  visit_conv(prefix + ".conv2", conv2, f);
  visit_norm(prefix + ".norm2", norm2, f);
}

Generator::Generator(GeneratorConfig config) : config_(config) {
  const int b = config_.base_channels;
  stem_ = Conv2d(config_.input_channels, b, 7, 1, 3);
  stem_norm_ = InstanceNorm(b);
  down1_ = Conv2d(b, 2 * b, 3, 2, 1);
  down1_norm_ = InstanceNorm(2 * b);
  down2_ = Conv2d(2 * b, 4 * b, 3, 2, 1);
  down2_norm_ = InstanceNorm(4 * b);
  for (int i = 0; i < config_.residual_blocks; ++i) blocks_.emplace_back(4 * b);
  up1_ = Conv2d(4 * b, 2 * b, 3, 1, 1);
  up1_norm_ = InstanceNorm(2 * b);
  up2_ = Conv2d(2 * b, b, 3, 1, 1);
  up2_norm_ = InstanceNorm(b);
  head_ = Conv2d(b, 3, 7, 1, 3);
}

Tensor Generator::forward(const Tensor& input) const {
  const Shape& s = input.shape();
  if (s.c != config_.input_channels) {
    throw DimensionError("channel", "generator expects " + std::to_string(config_.input_channels) +
                                        " input channels, got " + std::to_string(s.c));
  }
  if (s.h % 4 != 0) throw DimensionError("height", "generator input height must be divisible by 4");
  if (s.w % 4 != 0) throw DimensionError("width", "generator input width must be divisible by 4");
  Tensor x = relu(stem_norm_.forward(stem_.forward(input)));
  x = relu(down1_norm_.forward(down1_.forward(x)));
  x = relu(down2_norm_.forward(down2_.forward(x)));
  for (const auto& block : blocks_) x = block.forward(x);
  x = relu(up1_norm_.forward(up1_.forward(resample(x, Resample::up2))));
  x = relu(up2_norm_.forward(up2_.forward(resample(x, Resample::up2))));
  return ops::tanh(head_.forward(x));
}

Tensor Generator::forward(const Tensor& rgb, const Tensor& xi) const {
  if (rgb.shape().c != 3) throw DimensionError("channel", "generator rgb input must have 3 channels");
  if (xi.shape().h != rgb.shape().h || xi.shape().w != rgb.shape().w) {
    throw DimensionError("spatial", "invariant map " + xi.shape().str() + " vs image " + rgb.shape().str());
  }
  return forward(concat_channels({rgb, xi}));
}

void Generator::visit(const ParamVisitor& f) {
  visit_conv("gen.stem", stem_, f);
  visit_norm("gen.stem_norm", stem_norm_, f);
  visit_conv("gen.down1", down1_, f);
  visit_norm("gen.down1_norm", down1_norm_, f);
  visit_conv("gen.down2", down2_, f);
  visit_norm("gen.down2_norm", down2_norm_, f);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].visit("gen.res" + std::to_string(i), f);
  visit_conv("gen.up1", up1_, f);
  visit_norm("gen.up1_norm", up1_norm_, f);
  visit_conv("gen.up2", up2_, f);
  visit_norm("gen.up2_norm", up2_norm_, f);
  visit_conv("gen.head", head_, f);
}

Discriminator::Discriminator()
    : c1_(3, 32, 4, 2, 1), c2_(32, 64, 4, 2, 1), c3_(64, 128, 4, 2, 1), out_(128, 1, 4, 2, 1), n2_(64), n3_(128) {}

Tensor Discriminator::forward(const Tensor& image) const {
  const Shape& s = image.shape();
  if (s.c != 3) throw DimensionError("channel", "discriminator expects RGB input");
  if (s.h < kMinExtent) throw DimensionError("height", "discriminator input must be at least 32 pixels high");
  if (s.w < kMinExtent) throw DimensionError("width", "discriminator input must be at least 32 pixels wide");
  Tensor x = leaky_relu(c1_.forward(image), 0.2f);
  x = leaky_relu(n2_.forward(c2_.forward(x)), 0.2f);
  x = leaky_relu(n3_.forward(c3_.forward(x)), 0.2f);
  return out_.forward(x);
}

void Discriminator::visit(const ParamVisitor& f) {
  visit_conv("disc.c1", c1_, f);
  visit_conv("disc.c2", c2_, f);
  visit_norm("disc.n2", n2_, f);
  visit_conv("disc.c3", c3_, f);
  visit_norm("disc.n3", n3_, f);
  visit_conv("disc.out", out_, f);
}

void Networks::visit_generator(const ParamVisitor& f) {
  generator.visit(f);
  f("lci.weight", ensemble.weight());
  f("lci.bias", ensemble.bias());
}

void Networks::visit_discriminator(const ParamVisitor& f) { discriminator.visit(f); }

WeightSet Networks::collect() {
  WeightSet out;
  auto push = [&](const std::string& name, Tensor& t) { out.push_back({name, t}); };
  visit_generator(push);
  visit_discriminator(push);
  return out;
}

void Networks::load(const WeightSet& weights, const std::string& origin) {
  auto assign = [&](const std::string& name, Tensor& t) {
    const Tensor& src = find_weight(weights, name, origin);
    if (src.shape() != t.shape()) {
      throw DimensionError("shape", origin + ": " + name + " has shape " + src.shape().str() + ", expected " +
                                        t.shape().str());
    }
    auto dst = t.mutable_data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  };
  visit_generator(assign);
  visit_discriminator(assign);
}

Networks init_networks(std::uint64_t seed, GeneratorConfig config) {
  Networks nets{Generator(config), Discriminator(), color::LearnableEnsemble()};
  Rng rng(seed);
  auto init = [&](const std::string& name, Tensor& t) {
    const bool is_conv_weight = name.size() > 7 && name.compare(name.size() - 7, 7, ".weight") == 0 &&
                                name.rfind("lci.", 0) != 0;
    if (!is_conv_weight) return;
    for (float& v : t.mutable_data()) v = static_cast<float>(rng.normal(0.0, 0.02));
  };
  nets.visit_generator(init);
  nets.visit_discriminator(init);
  return nets;
}

}  // namespace dico::nn
