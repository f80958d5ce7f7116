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
#include <string>
#include <vector>

#include "dico/tensor.hpp"
#include "dico/weights_io.hpp"

namespace dico::optim {

struct AdamConfig {
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adam with bias correction over a fixed list of named parameters.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, AdamConfig config = {});

  // Applies one update from the parameters' gradients (missing gradient =
  // zero) and clears them. Throws TrainingAbort on a non-finite gradient.
  void step(long iteration = 0);
  void zero_grad();

  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<NamedTensor>& params() const { return params_; }

  // Moments as "<prefix>m.<name>" / "<prefix>v.<name>" plus a step record.
  void collect_state(WeightSet& out, const std::string& prefix) const;
  void load_state(const WeightSet& in, const std::string& prefix, const std::string& origin);

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  AdamConfig config_;
  std::int64_t step_ = 0;
};

}  // namespace dico::optim
