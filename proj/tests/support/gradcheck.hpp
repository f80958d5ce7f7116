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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "dico/ops.hpp"
#include "dico/rng.hpp"
#include "dico/tensor.hpp"

namespace dico::testing {

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(static_cast<std::size_t>(s.numel()));
  for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor(s, std::move(v));
}

inline Tensor random_normal(Shape s, Rng& rng, double stddev = 1.0) {
  std::vector<float> v(static_cast<std::size_t>(s.numel()));
  for (float& x : v) x = static_cast<float>(rng.normal(0.0, stddev));
  return Tensor(s, std::move(v));
}

// Values with |x| >= margin, so kinks at zero are never straddled.
inline Tensor away_from_zero(Shape s, Rng& rng, double margin = 0.05) {
  std::vector<float> v(static_cast<std::size_t>(s.numel()));
  for (float& x : v) {
    const double m = rng.uniform(margin, 1.0);
    x = static_cast<float>(rng.uniform() < 0.5 ? -m : m);
  }
  return Tensor(s, std::move(v));
}

struct GradCheck {
  double rel_error = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares reverse-mode gradients of L = sum(R * f(inputs)) (R fixed random
// weights) with central differences, for every element of every input
// flagged in `check`. Error is norm-wise over all checked elements.
//
// Perturbed evaluations replay the kink sides of piecewise ops recorded at the
// unperturbed point, so differences never straddle a kink.
inline GradCheck grad_check(const TensorFn& f, std::vector<Tensor> inputs, std::uint64_t seed = 7,
                            double h = 1e-3, std::vector<bool> check = {}) {
  if (check.empty()) check.assign(inputs.size(), true);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    inputs[i] = inputs[i].clone();
    inputs[i].set_requires_grad(check[i]);
  }

  Tensor proj;
  auto project = [&](const Tensor& out) {
    double acc = 0.0;
    const auto o = out.data();
    const auto r = proj.data();
    for (std::size_t k = 0; k < o.size(); ++k) acc += static_cast<double>(o[k]) * r[k];
    return acc;
  };

  std::vector<std::vector<float>> analytic(inputs.size());
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor out = f(inputs);
    Rng rng(seed);
    proj = random_normal(out.shape(), rng);
    // sum(out * R) as a tape-recorded scalar.
    const Tensor weighted = detail::make_result(
        {1, 1, 1, 1}, {static_cast<float>(project(out))}, {out}, [out, p = proj](std::span<const float> g) {
          Tensor t = out;
          if (!t.requires_grad()) return;
          auto buf = t.grad_buffer();
          const auto r = p.data();
          for (std::size_t k = 0; k < buf.size(); ++k) buf[k] += g[0] * r[k];
        });
    tape.backward(weighted);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!check[i]) continue;
      const auto g = inputs[i].has_grad() ? inputs[i].grad() : std::span<const float>{};
      analytic[i].assign(static_cast<std::size_t>(inputs[i].numel()), 0.0f);
      for (std::size_t k = 0; k < g.size(); ++k) analytic[i][k] = g[k];
    }
  }

  GradCheck res;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  NoGradScope ng;
  ops::BranchTrace trace;
  trace.record();
  project(f(inputs));
  trace.replay();
  auto eval = [&] {
    trace.replay();
    return project(f(inputs));
  };
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!check[i]) continue;
    auto data = inputs[i].mutable_data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const float orig = data[k];
      data[k] = static_cast<float>(orig + h);
      const double du = static_cast<double>(data[k]) - orig;
      const double up = eval();
      data[k] = static_cast<float>(orig - h);
      const double dd = static_cast<double>(data[k]) - orig;
      const double down = eval();
      data[k] = orig;
      const double numeric = (up - down) / (du - dd);
      const double a = analytic[i][k];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  res.analytic_norm = std::sqrt(a2);
  res.numeric_norm = std::sqrt(n2);
  res.rel_error = std::sqrt(diff2) / std::max({res.analytic_norm, res.numeric_norm, 1e-6});
  return res;
}

}  // namespace dico::testing
