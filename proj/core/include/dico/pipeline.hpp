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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dico/data.hpp"
#include "dico/disentangle.hpp"
#include "dico/feature_extractor.hpp"
#include "dico/image.hpp"
#include "dico/losses.hpp"
#include "dico/networks.hpp"
#include "dico/optim.hpp"
#include "dico/tensor.hpp"

namespace dico {

struct TrainConfig {
  std::uint64_t seed = 0;
  int iterations = 200;
  int batch_size = 1;

  float lr_g = 2e-4f;
  float lr_d = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;

  float w_adv = 1.0f;
  float w_back = 1.0f;
  float w_fore = 1.0f;
  float tau = 0.07f;

  double sigma = 1.0;
  double eps_inv = 1e-4;
  float gamma = 10.0f;
  float s0 = 0.5f;
  float threshold = 0.5f;
  std::vector<std::string> stages = {"stage3", "stage4"};
  // Hard negatives per stage; 0 selects min(64, ceil(HW / 4)).
  int negatives = 0;

  int image_size = 64;
  int residual_blocks = 4;
  int base_channels = 32;
  std::uint64_t extractor_seed = 0;

  bool use_lci = true;
  bool use_l_fore = true;
  bool use_l_back = true;

  std::string dataset_root;
  std::string output_dir;
  int log_every = 1;
  int sample_every = 50;
  // Intermediate checkpoints every N iterations (0: final only).
  int checkpoint_every = 0;
  std::string resume_from;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);

  nn::GeneratorConfig generator_config() const;
  optim::AdamConfig adam(float lr) const;
  loss::Weights effective_weights() const;
  MaskParams mask_params() const;
};

// Weight file plus "<stem>.json" sidecar with the config and step counter.
struct Checkpoint {
  TrainConfig config;
  std::int64_t step = 0;
  WeightSet weights;
};

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& weights_path);
Checkpoint load_checkpoint(const std::filesystem::path& weights_path);

/// Owns networks, optimisers and the frozen extractor for one training run.
class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  // Fixes x_D^ref and caches its feature pyramid.
  void set_reference(const Tensor& reference);

  // One generator update followed by one discriminator update.
  loss::Report step(const Batch& batch);

  // x_{N->D} in [0,1]; no parameter mutation, no tape.
  Tensor translate(const Tensor& night) const;
  // LCI map xi (or an undefined tensor without LCI).
  Tensor invariant_map(const Tensor& night) const;
  // Masks of `image` against the cached reference, no tape.
  MaskSet masks_of(const Tensor& image) const;

  void save_checkpoint(const std::filesystem::path& weights_path);
  void load_checkpoint(const Checkpoint& checkpoint, const std::string& origin);

  nn::Networks& networks() { return nets_; }
  const FeatureExtractor& extractor() const { return extractor_; }
  const TrainConfig& config() const { return config_; }
  std::int64_t iteration() const { return iteration_; }

 private:
  Tensor generate(const Tensor& night) const;
  const FeaturePyramid& reference_pyramid(std::int64_t batch);

  TrainConfig config_;
  nn::Networks nets_;
  FeatureExtractor extractor_;
  std::unique_ptr<optim::Adam> opt_g_;
  std::unique_ptr<optim::Adam> opt_d_;
  Tensor reference_;
  std::map<std::int64_t, FeaturePyramid> reference_cache_;
  std::int64_t iteration_ = 0;
};

// Panel strip: night | xi | stage mask | output | reference.
Image sample_grid(const Trainer& trainer, const Tensor& night, const Tensor& reference);

struct TrainResult {
  std::vector<loss::Report> reports;
  std::filesystem::path checkpoint;
  std::int64_t final_step = 0;
};

// Full loop on config.dataset_root. Writes config.json, losses.csv,
// checkpoint.dicow (+ sidecar), periodic checkpoints and sample grids to
// config.output_dir. `progress` is called after every step.
TrainResult train(const TrainConfig& config,
                  const std::function<void(std::int64_t, const loss::Report&)>& progress = {});

// Inference with a trained checkpoint; output matches the input extents.
Image translate(const Image& night, Trainer& trainer);

}  // namespace dico
