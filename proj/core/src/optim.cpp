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

#include "dico/optim.hpp"

#include <cmath>

#include "dico/error.hpp"

namespace dico::optim {

Adam::Adam(std::vector<NamedTensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0f)) throw ParameterError("learning rate must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
  }
}

void Adam::step(long iteration) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad())
      if (!std::isfinite(g)) throw TrainingAbort("gradient of " + p.name, iteration, "non-finite gradient");
  }
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    auto data = t.mutable_data();
    const bool has = t.has_grad();
    std::span<const float> grad = has ? t.grad() : std::span<const float>{};
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const float g = has ? grad[j] : 0.0f;
      m[j] = static_cast<float>(b1 * m[j] + (1.0 - b1) * g);
      v[j] = static_cast<float>(b2 * v[j] + (1.0 - b2) * static_cast<double>(g) * g);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      data[j] -= static_cast<float>(config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::collect_state(WeightSet& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Shape s = params_[i].tensor.shape();
    out.push_back({prefix + "m." + params_[i].name, Tensor(s, m_[i])});
    out.push_back({prefix + "v." + params_[i].name, Tensor(s, v_[i])});
  }
  // Step count stored exactly as two 24-bit halves.
  const float lo = static_cast<float>(step_ & 0xFFFFFF);
  const float hi = static_cast<float>((step_ >> 24) & 0xFFFFFF);
  out.push_back({prefix + "step", Tensor({1, 1, 1, 2}, {lo, hi})});
}

void Adam::load_state(const WeightSet& in, const std::string& prefix, const std::string& origin) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& m = find_weight(in, prefix + "m." + params_[i].name, origin);
    const Tensor& v = find_weight(in, prefix + "v." + params_[i].name, origin);
    if (m.numel() != params_[i].tensor.numel() || v.numel() != params_[i].tensor.numel()) {
      throw DimensionError("shape", origin + ": optimizer state for " + params_[i].name + " has wrong size");
    }
    m_[i].assign(m.data().begin(), m.data().end());
    v_[i].assign(v.data().begin(), v.data().end());
  }
  const auto st = find_weight(in, prefix + "step", origin).data();
  step_ = static_cast<std::int64_t>(st[0]) | (static_cast<std::int64_t>(st[1]) << 24);
}

}  // namespace dico::optim
