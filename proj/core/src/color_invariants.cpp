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

#include "dico/color_invariants.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dico/error.hpp"
#include "dico/ops.hpp"

namespace dico::color {

using namespace dico::ops;

int kernel_radius(double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("sigma must be positive, got " + std::to_string(sigma));
  return static_cast<int>(std::ceil(3.0 * sigma));
}

std::vector<float> smoothing_taps(double sigma) {
  const int r = kernel_radius(sigma);
  std::vector<double> g(r + 1);
  double total = 0.0;
  for (int t = 0; t <= r; ++t) {
    g[t] = std::exp(-0.5 * t * t / (sigma * sigma));
    total += t == 0 ? g[t] : 2.0 * g[t];
  }
  std::vector<float> taps(r + 1);
  for (int t = 0; t <= r; ++t) taps[t] = static_cast<float>(g[t] / total);
  return taps;
}

std::vector<float> derivative_taps(double sigma) {
  const int r = kernel_radius(sigma);
  // Convolution kernel dg(u) = -u / sigma^2 * g(u). Correlating with the
  // flipped kernel gives taps k(t) = dg(-t) = t / sigma^2 * g(t); scaling so
  // that sum_t t * k(t) = 1 makes a unit ramp respond with exactly 1.
  std::vector<double> k(r + 1, 0.0);
  double moment = 0.0;
  for (int t = 1; t <= r; ++t) {
    k[t] = t / (sigma * sigma) * std::exp(-0.5 * t * t / (sigma * sigma));
    moment += 2.0 * t * k[t];
  }
  std::vector<float> taps(r + 1, 0.0f);
  for (int t = 1; t <= r; ++t) taps[t] = static_cast<float>(k[t] / moment);
  return taps;
}

Tensor filter_1d(const Tensor& x, std::span<const float> taps, Axis axis, Parity parity) {
  const Shape& s = x.shape();
  const std::int64_t r = static_cast<std::int64_t>(taps.size()) - 1;
  const std::int64_t len = axis == Axis::rows ? s.h : s.w;
  const std::int64_t step = axis == Axis::rows ? s.w : 1;
  const std::int64_t lines = axis == Axis::rows ? s.w : s.h;
  const std::int64_t line_step = axis == Axis::rows ? 1 : s.w;
  std::vector<float> tap_copy(taps.begin(), taps.end());
  const float sign = parity == Parity::odd ? -1.0f : 1.0f;
  const float center = parity == Parity::odd ? 0.0f : tap_copy[0];

  std::vector<float> out(static_cast<std::size_t>(s.numel()));
  const auto xv = x.data();
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
    const float* plane = xv.data() + nc * s.plane();
    float* dst = out.data() + nc * s.plane();
    for (std::int64_t line = 0; line < lines; ++line) {
      const float* src = plane + line * line_step;
      for (std::int64_t p = 0; p < len; ++p) {
        float acc = center * src[p * step];
        for (std::int64_t t = 1; t <= r; ++t) {
          const std::int64_t fwd = std::min(p + t, len - 1);
          const std::int64_t back = std::max(p - t, std::int64_t{0});
          acc += tap_copy[t] * (src[fwd * step] + sign * src[back * step]);
        }
        dst[line * line_step + p * step] = acc;
      }
    }
  }
  return detail::make_result(s, std::move(out), {x}, [x, tap_copy, axis, sign, center](std::span<const float> g) {
    Tensor tx = x;
    const Shape& s = x.shape();
    const std::int64_t r = static_cast<std::int64_t>(tap_copy.size()) - 1;
    const std::int64_t len = axis == Axis::rows ? s.h : s.w;
    const std::int64_t step = axis == Axis::rows ? s.w : 1;
    const std::int64_t lines = axis == Axis::rows ? s.w : s.h;
    const std::int64_t line_step = axis == Axis::rows ? 1 : s.w;
    auto gx = tx.grad_buffer();
    for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
      float* gplane = gx.data() + nc * s.plane();
      const float* gsrc = g.data() + nc * s.plane();
      for (std::int64_t line = 0; line < lines; ++line) {
        for (std::int64_t p = 0; p < len; ++p) {
          const float go = gsrc[line * line_step + p * step];
          gplane[line * line_step + p * step] += center * go;
          for (std::int64_t t = 1; t <= r; ++t) {
            const std::int64_t fwd = std::min(p + t, len - 1);
            const std::int64_t back = std::max(p - t, std::int64_t{0});
            gplane[line * line_step + fwd * step] += tap_copy[t] * go;
            gplane[line * line_step + back * step] += sign * tap_copy[t] * go;
          }
        }
      }
    }
  });
}

GaussianColorPlanes gaussian_color_model(const Tensor& rgb) {
  if (rgb.shape().c != 3) {
    throw DimensionError("channel", "gaussian colour model expects 3 channels, got " +
                                        std::to_string(rgb.shape().c));
  }
  const Tensor matrix({3, 3, 1, 1}, std::vector<float>(kGaussianColorMatrix.begin(), kGaussianColorMatrix.end()));
  const Tensor planes = conv2d(rgb, matrix, std::nullopt);
  return {slice_channels(planes, 0, 1), slice_channels(planes, 1, 1), slice_channels(planes, 2, 1)};
}

DerivativeSet gaussian_derivatives(const GaussianColorPlanes& planes, double sigma) {
  const int r = kernel_radius(sigma);
  const Shape& s = planes.e.shape();
  const std::int64_t min_extent = 2 * r + 1;
  if (s.h < min_extent) {
    throw DimensionError("height", "image height " + std::to_string(s.h) + " below " + std::to_string(min_extent));
  }
  if (s.w < min_extent) {
    throw DimensionError("width", "image width " + std::to_string(s.w) + " below " + std::to_string(min_extent));
  }
  const auto smooth = smoothing_taps(sigma);
  const auto deriv = derivative_taps(sigma);

  auto smoothed = [&](const Tensor& p) {
    return filter_1d(filter_1d(p, smooth, Axis::rows, Parity::even), smooth, Axis::cols, Parity::even);
  };
  auto d_rows = [&](const Tensor& p) {
    return filter_1d(filter_1d(p, deriv, Axis::rows, Parity::odd), smooth, Axis::cols, Parity::even);
  };
  auto d_cols = [&](const Tensor& p) {
    return filter_1d(filter_1d(p, smooth, Axis::rows, Parity::even), deriv, Axis::cols, Parity::odd);
  };

  DerivativeSet d;
  d.sigma = sigma;
  d.e = smoothed(planes.e);
  d.el = smoothed(planes.el);
  d.ell = smoothed(planes.ell);
  d.e_i = d_rows(planes.e);
  d.e_j = d_cols(planes.e);
  d.el_i = d_rows(planes.el);
  d.el_j = d_cols(planes.el);
  d.ell_i = d_rows(planes.ell);
  d.ell_j = d_cols(planes.ell);
  return d;
}

namespace {

Tensor root_sum_squares(std::initializer_list<Tensor> terms) {
  Tensor acc;
  for (const Tensor& t : terms) acc = acc.defined() ? add(acc, square(t)) : square(t);
  return ops::sqrt(acc);
}

struct DirectionTerms {
  Tensor w_e, w_el, w_ell;  // W sub-terms
  Tensor c_l, c_ll;         // C sub-terms (N_l equals C_l)
  Tensor h;
  Tensor n_ll;
};

// Invariant sub-terms for one spatial direction (derivatives e_x, el_x, ell_x).
DirectionTerms direction_terms(const DerivativeSet& d, const Tensor& e_x, const Tensor& el_x,
                               const Tensor& ell_x, const Tensor& inv1, const Tensor& inv2,
                               const Tensor& inv3, const Tensor& inv_h_den) {
  DirectionTerms t;
  t.w_e = mul(e_x, inv1);
  t.w_el = mul(el_x, inv1);
  t.w_ell = mul(ell_x, inv1);
  t.c_l = mul(sub(mul(el_x, d.e), mul(d.el, e_x)), inv2);
  t.c_ll = mul(sub(mul(ell_x, d.e), mul(d.ell, e_x)), inv2);
  t.h = mul(sub(mul(el_x, d.ell), mul(d.el, ell_x)), inv_h_den);
  // (E_llx E^2 - E_ll E_x E - 2 E_lx E_l E + 2 E_l^2 E_x) / E^3
  const Tensor e2 = square(d.e);
  Tensor num = mul(ell_x, e2);
  num = sub(num, mul(mul(d.ell, e_x), d.e));
  num = sub(num, scale(mul(mul(el_x, d.el), d.e), 2.0f));
  num = add(num, scale(mul(square(d.el), e_x), 2.0f));
  t.n_ll = mul(num, inv3);
  return t;
}

}  // namespace

InvariantStack compute_invariants(const DerivativeSet& d, double epsilon) {
  if (!(epsilon > 0.0)) throw ParameterError("invariant epsilon must be positive");
  const float eps = static_cast<float>(epsilon);
  // Reciprocals of the floored denominators E, E^2, E^3 and E_l^2 + E_ll^2.
  const Tensor inv1 = reciprocal(clamp_min(d.e, eps));
  const Tensor inv2 = square(inv1);
  const Tensor inv3 = mul(inv2, inv1);
  const Tensor inv_h_den = reciprocal(clamp_min(add(square(d.el), square(d.ell)), eps * eps));

  const DirectionTerms ti = direction_terms(d, d.e_i, d.el_i, d.ell_i, inv1, inv2, inv3, inv_h_den);
  const DirectionTerms tj = direction_terms(d, d.e_j, d.el_j, d.ell_j, inv1, inv2, inv3, inv_h_den);

  const Tensor inv_e = root_sum_squares({d.e_i, d.el_i, d.ell_i, d.e_j, d.el_j, d.ell_j});
  const Tensor inv_w = root_sum_squares({ti.w_e, ti.w_el, ti.w_ell, tj.w_e, tj.w_el, tj.w_ell});
  const Tensor inv_c = root_sum_squares({ti.c_l, ti.c_ll, tj.c_l, tj.c_ll});
  const Tensor inv_h = root_sum_squares({ti.h, tj.h});
  const Tensor inv_n = root_sum_squares({ti.c_l, ti.n_ll, tj.c_l, tj.n_ll});

  return {concat_channels({inv_e, inv_w, inv_c, inv_h, inv_n}), d.sigma, epsilon};
}

InvariantStack invariants_of(const Tensor& rgb, double sigma, double epsilon) {
  return compute_invariants(gaussian_derivatives(gaussian_color_model(rgb), sigma), epsilon);
}

LearnableEnsemble::LearnableEnsemble()
    : weight_(Tensor::full({kOutputChannels, 5, 1, 1}, 0.2f, true)),
      bias_(Tensor::zeros({1, kOutputChannels, 1, 1}, true)) {}

LearnableEnsemble::LearnableEnsemble(Tensor weight, Tensor bias)
    : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.shape() != Shape{kOutputChannels, 5, 1, 1}) {
    throw DimensionError("channel", "ensemble weight must be (3,5,1,1), got " + weight_.shape().str());
  }
  if (bias_.numel() != kOutputChannels) throw DimensionError("channel", "ensemble bias must have 3 elements");
  weight_.set_requires_grad(true);
  bias_.set_requires_grad(true);
}

Tensor LearnableEnsemble::forward(const InvariantStack& stack) const {
  if (stack.phi.shape().c != 5) {
    throw DimensionError("channel", "invariant stack must have 5 channels, got " +
                                        std::to_string(stack.phi.shape().c));
  }
  return conv2d(stack.phi, weight_, bias_);
}

void LearnableEnsemble::collect(WeightSet& out, const std::string& prefix) const {
  out.push_back({prefix + "weight", weight_});
  out.push_back({prefix + "bias", bias_});
}

void LearnableEnsemble::load(const WeightSet& in, const std::string& prefix, const std::string& origin) {
  *this = LearnableEnsemble(find_weight(in, prefix + "weight", origin).clone(),
                            find_weight(in, prefix + "bias", origin).clone());
}

Tensor lci_forward(const InvariantStack& stack, const LearnableEnsemble& ensemble) {
  return ensemble.forward(stack);
}

}  // namespace dico::color
