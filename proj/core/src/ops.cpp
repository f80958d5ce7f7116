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

#include "dico/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>

#include "dico/error.hpp"

namespace dico::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::vector<float> buffer(std::int64_t count, float value = 0.0f) {
  return std::vector<float>(static_cast<std::size_t>(count), value);
}

// ---------------------------------------------------------------------------
// Broadcasting for binary ops.

struct Broadcast {
  std::int64_t sn, sc, sh, sw;  // strides into the right-hand operand
};

Broadcast broadcast_of(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return {b.c * b.h * b.w, b.h * b.w, b.w, 1};
  const bool per_channel = b.n == 1 && b.c == a.c && b.h == 1 && b.w == 1;
  const bool per_location = b.n == a.n && b.c == 1 && b.h == a.h && b.w == a.w;
  const bool scalar = b == Shape{1, 1, 1, 1};
  if (!per_channel && !per_location && !scalar) {
    std::string axis = b.n != a.n && b.n != 1 ? "batch"
                       : b.c != a.c && b.c != 1 ? "channel"
                       : b.h != a.h && b.h != 1 ? "height"
                                                : "width";
    throw DimensionError(axis, std::string(op) + ": cannot broadcast " + b.str() + " onto " +
                                   a.str());
  }
  return {b.n == 1 ? 0 : b.c * b.h * b.w, b.c == 1 ? 0 : b.h * b.w, b.h == 1 ? 0 : b.w,
          b.w == 1 ? 0 : 1};
}

template <typename Visit>
void for_each_broadcast(const Shape& s, const Broadcast& bc, Visit&& visit) {
  std::int64_t i = 0;
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t h = 0; h < s.h; ++h)
        for (std::int64_t w = 0; w < s.w; ++w, ++i)
          visit(i, n * bc.sn + c * bc.sc + h * bc.sh + w * bc.sw);
}

enum class BinaryKind { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  const Shape& sa = a.shape();
  const Broadcast bc = broadcast_of(sa, b.shape(), name);
  auto out = buffer(sa.numel());
  const auto av = a.data();
  const auto bv = b.data();
  for_each_broadcast(sa, bc, [&](std::int64_t i, std::int64_t j) {
    switch (kind) {
      case BinaryKind::add: out[i] = av[i] + bv[j]; break;
      case BinaryKind::sub: out[i] = av[i] - bv[j]; break;
      case BinaryKind::mul: out[i] = av[i] * bv[j]; break;
      case BinaryKind::div: out[i] = av[i] / (bv[j] + kStabilizer); break;
    }
  });
  return detail::make_result(sa, std::move(out), {a, b}, [a, b, bc, kind](std::span<const float> g) {
    Tensor ta = a;
    Tensor tb = b;
    const auto av = a.data();
    const auto bv = b.data();
    const Shape& sa = a.shape();
    if (ta.requires_grad()) {
      auto ga = ta.grad_buffer();
      for_each_broadcast(sa, bc, [&](std::int64_t i, std::int64_t j) {
        switch (kind) {
          case BinaryKind::add:
          case BinaryKind::sub: ga[i] += g[i]; break;
          case BinaryKind::mul: ga[i] += g[i] * bv[j]; break;
          case BinaryKind::div: ga[i] += g[i] / (bv[j] + kStabilizer); break;
        }
      });
    }
    if (tb.requires_grad()) {
      auto gb = tb.grad_buffer();
      for_each_broadcast(sa, bc, [&](std::int64_t i, std::int64_t j) {
        switch (kind) {
          case BinaryKind::add: gb[j] += g[i]; break;
          case BinaryKind::sub: gb[j] -= g[i]; break;
          case BinaryKind::mul: gb[j] += g[i] * av[i]; break;
          case BinaryKind::div: {
            const float d = bv[j] + kStabilizer;
            gb[j] -= g[i] * av[i] / (d * d);
            break;
          }
        }
      });
    }
  });
}

// Elementwise map with derivative expressed through input x and output y.
template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  const auto xv = x.data();
  auto out = buffer(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  auto y = std::make_shared<std::vector<float>>(out);
  return detail::make_result(x.shape(), std::move(out), {x}, [x, y, df](std::span<const float> g) {
    Tensor tx = x;
    auto gx = tx.grad_buffer();
    const auto xv = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * df(xv[i], (*y)[i]);
  });
}

// ---------------------------------------------------------------------------
// Convolution helpers.

struct ConvGeometry {
  std::int64_t c, h, w, kh, kw, stride, pad, oh, ow;
  std::int64_t rows() const { return c * kh * kw; }
  std::int64_t cols() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const float* x, const ConvGeometry& g, float* col) {
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        float* dst = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (std::int64_t oh = 0; oh < g.oh; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          float* row = dst + oh * g.ow;
          if (ih < 0 || ih >= g.h) {
            std::fill(row, row + g.ow, 0.0f);
            continue;
          }
          const float* src = x + (c * g.h + ih) * g.w;
          for (std::int64_t ow = 0; ow < g.ow; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kj;
            row[ow] = (iw >= 0 && iw < g.w) ? src[iw] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* col, const ConvGeometry& g, float* x) {
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const float* src = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (std::int64_t oh = 0; oh < g.oh; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          float* dst = x + (c * g.h + ih) * g.w;
          const float* row = src + oh * g.ow;
          for (std::int64_t ow = 0; ow < g.ow; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.w) dst[iw] += row[ow];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              int stride, int padding) {
  const Shape& si = input.shape();
  const Shape& sw = weight.shape();
  if (stride <= 0) throw ParameterError("conv2d: stride must be positive");
  if (padding < 0) throw ParameterError("conv2d: padding must be non-negative");
  if (si.c != sw.c) {
    throw DimensionError("channel", "conv2d: input has " + std::to_string(si.c) +
                                        " channels, weight expects " + std::to_string(sw.c));
  }
  if (bias && bias->numel() != sw.n) {
    throw DimensionError("channel", "conv2d: bias has " + std::to_string(bias->numel()) +
                                        " elements, expected " + std::to_string(sw.n));
  }
  const std::int64_t oh = (si.h + 2 * padding - sw.h) / stride + 1;
  const std::int64_t ow = (si.w + 2 * padding - sw.w) / stride + 1;
  if (si.h + 2 * padding < sw.h || oh <= 0) {
    throw DimensionError("height", "conv2d: kernel taller than padded input");
  }
  if (si.w + 2 * padding < sw.w || ow <= 0) {
    throw DimensionError("width", "conv2d: kernel wider than padded input");
  }
  const ConvGeometry geo{si.c, si.h, si.w, sw.h, sw.w, stride, padding, oh, ow};
  const Shape so{si.n, sw.n, oh, ow};
  auto out = buffer(so.numel());

  ConstMapMat wmat(weight.data().data(), sw.n, geo.rows());
  std::vector<float> col(geo.pointwise() ? 0 : static_cast<std::size_t>(geo.rows() * geo.cols()));
  for (std::int64_t n = 0; n < si.n; ++n) {
    const float* x = input.data().data() + n * si.c * si.h * si.w;
    if (!geo.pointwise()) im2col(x, geo, col.data());
    ConstMapMat cmat(geo.pointwise() ? x : col.data(), geo.rows(), geo.cols());
    MapMat omat(out.data() + n * so.c * so.h * so.w, so.c, geo.cols());
    omat.noalias() = wmat * cmat;
    if (bias) {
      const auto bv = bias->data();
      for (std::int64_t c = 0; c < so.c; ++c) omat.row(c).array() += bv[c];
    }
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  std::optional<Tensor> b = bias;
  return detail::make_result(so, std::move(out), inputs, [input, weight, b, geo, so](std::span<const float> g) {
    Tensor tin = input;
    Tensor tw = weight;
    const Shape& si = input.shape();
    ConstMapMat wmat(weight.data().data(), so.c, geo.rows());
    std::vector<float> col(static_cast<std::size_t>(geo.rows() * geo.cols()));
    std::vector<float> gcol(static_cast<std::size_t>(geo.rows() * geo.cols()));
    for (std::int64_t n = 0; n < si.n; ++n) {
      const float* x = input.data().data() + n * si.c * si.h * si.w;
      ConstMapMat gmat(g.data() + n * so.c * so.h * so.w, so.c, geo.cols());
      if (tw.requires_grad()) {
        MapMat gw(tw.grad_buffer().data(), so.c, geo.rows());
        if (geo.pointwise()) {
          gw.noalias() += gmat * ConstMapMat(x, geo.rows(), geo.cols()).transpose();
        } else {
          im2col(x, geo, col.data());
          gw.noalias() += gmat * ConstMapMat(col.data(), geo.rows(), geo.cols()).transpose();
        }
      }
      if (tin.requires_grad()) {
        float* gx = tin.grad_buffer().data() + n * si.c * si.h * si.w;
        if (geo.pointwise()) {
          MapMat(gx, geo.rows(), geo.cols()).noalias() += wmat.transpose() * gmat;
        } else {
          MapMat(gcol.data(), geo.rows(), geo.cols()).noalias() = wmat.transpose() * gmat;
          col2im(gcol.data(), geo, gx);
        }
      }
    }
    if (b && b->requires_grad()) {
      Tensor tb = *b;
      auto gb = tb.grad_buffer();
      for (std::int64_t n = 0; n < si.n; ++n)
        for (std::int64_t c = 0; c < so.c; ++c) {
          const float* gp = g.data() + (n * so.c + c) * so.h * so.w;
          double acc = 0.0;
          for (std::int64_t i = 0; i < so.h * so.w; ++i) acc += gp[i];
          gb[c] += static_cast<float>(acc);
        }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::div, "div"); }

Tensor scale(const Tensor& x, float factor) {
  return unary(x, [factor](float v) { return v * factor; },
               [factor](float, float) { return factor; });
}

Tensor add_scalar(const Tensor& x, float value) {
  return unary(x, [value](float v) { return v + value; }, [](float, float) { return 1.0f; });
}

namespace {
thread_local BranchTrace* active_trace = nullptr;

// fn(v, above) returns {value, slope} for one element.
template <class F>
Tensor piecewise(const Tensor& x, float kink, F fn) {
  const auto xv = x.data();
  std::vector<bool> above;
  if (active_trace != nullptr) {
    above = active_trace->next(xv, kink);
  } else {
    above.resize(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) above[i] = xv[i] > kink;
  }
  auto out = buffer(x.numel());
  auto slope = std::make_shared<std::vector<float>>(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto [v, d] = fn(xv[i], static_cast<bool>(above[i]));
    out[i] = v;
    (*slope)[i] = d;
  }
  return detail::make_result(x.shape(), std::move(out), {x}, [x, slope](std::span<const float> g) {
    Tensor tx = x;
    auto gx = tx.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (*slope)[i];
  });
}
}  // namespace

BranchTrace::BranchTrace() : previous_(active_trace) { active_trace = this; }
BranchTrace::~BranchTrace() { active_trace = previous_; }

void BranchTrace::record() {
  branches_.clear();
  replaying_ = false;
}

void BranchTrace::replay() {
  cursor_ = 0;
  replaying_ = true;
}

std::vector<bool> BranchTrace::next(std::span<const float> x, float kink) {
  std::vector<bool> above(x.size());
  if (replaying_) {
    if (cursor_ + x.size() > branches_.size()) throw StateError("branch replay ran past the recorded trace");
    for (std::size_t i = 0; i < x.size(); ++i) above[i] = branches_[cursor_ + i];
    cursor_ += x.size();
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) above[i] = x[i] > kink;
    branches_.insert(branches_.end(), above.begin(), above.end());
  }
  return above;
}

Tensor relu(const Tensor& x) {
  return piecewise(x, 0.0f, [](float v, bool up) { return up ? std::pair{v, 1.0f} : std::pair{0.0f, 0.0f}; });
}

Tensor leaky_relu(const Tensor& x, float slope) {
  return piecewise(x, 0.0f,
                   [slope](float v, bool up) { return up ? std::pair{v, 1.0f} : std::pair{slope * v, slope}; });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](float v) { return std::tanh(v); },
               [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
               [](float, float y) { return y * (1.0f - y); });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](float v) { return std::exp(v); }, [](float, float y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](float v) { return std::log(v + kStabilizer); },
               [](float v, float) { return 1.0f / (v + kStabilizer); });
}

Tensor sqrt(const Tensor& x) {
  return unary(x, [](float v) { return std::sqrt(std::max(v, 0.0f)); },
               [](float v, float) { return 0.5f / std::sqrt(std::max(v, 0.0f) + kStabilizer); });
}

Tensor square(const Tensor& x) {
  return unary(x, [](float v) { return v * v; }, [](float v, float) { return 2.0f * v; });
}

Tensor abs(const Tensor& x) {
  return piecewise(x, 0.0f, [](float v, bool up) {
    return up ? std::pair{v, 1.0f} : std::pair{-v, v < 0.0f ? -1.0f : 0.0f};
  });
}

Tensor reciprocal(const Tensor& x) {
  return unary(x, [](float v) { return 1.0f / v; }, [](float, float y) { return -y * y; });
}

Tensor clamp_min(const Tensor& x, float floor) {
  return piecewise(x, floor, [floor](float v, bool up) { return up ? std::pair{v, 1.0f} : std::pair{floor, 0.0f}; });
}

// ---------------------------------------------------------------------------
// Reductions.

Tensor sum(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("all", "sum over an empty tensor");
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  return detail::make_result({1, 1, 1, 1}, {static_cast<float>(acc)}, {x},
                             [x](std::span<const float> g) {
                               Tensor tx = x;
                               for (float& v : tx.grad_buffer()) v += g[0];
                             });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("all", "mean over an empty tensor");
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  const double count = static_cast<double>(x.numel());
  return detail::make_result({1, 1, 1, 1}, {static_cast<float>(acc / count)}, {x},
                             [x, count](std::span<const float> g) {
                               Tensor tx = x;
                               const float share = static_cast<float>(g[0] / count);
                               for (float& v : tx.grad_buffer()) v += share;
                             });
}

namespace {

Tensor channel_reduce(const Tensor& x, bool average) {
  const Shape& s = x.shape();
  if (s.c == 0) throw DimensionError("channel", "channel reduction over zero channels");
  const Shape so{s.n, 1, s.h, s.w};
  const std::int64_t plane = s.plane();
  const float factor = average ? 1.0f / static_cast<float>(s.c) : 1.0f;
  auto out = buffer(so.numel());
  const auto xv = x.data();
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t p = 0; p < plane; ++p) {
      double acc = 0.0;
      for (std::int64_t c = 0; c < s.c; ++c) acc += xv[(n * s.c + c) * plane + p];
      out[n * plane + p] = static_cast<float>(acc) * factor;
    }
  return detail::make_result(so, std::move(out), {x}, [x, factor](std::span<const float> g) {
    Tensor tx = x;
    const Shape& s = x.shape();
    const std::int64_t plane = s.plane();
    auto gx = tx.grad_buffer();
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c)
        for (std::int64_t p = 0; p < plane; ++p)
          gx[(n * s.c + c) * plane + p] += g[n * plane + p] * factor;
  });
}

}  // namespace

Tensor channel_mean(const Tensor& x) { return channel_reduce(x, true); }
Tensor channel_sum(const Tensor& x) { return channel_reduce(x, false); }

Tensor spatial_mean(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.h == 0 || s.w == 0) throw DimensionError("height", "spatial mean over an empty plane");
  const std::int64_t plane = s.plane();
  auto out = buffer(s.n * s.c);
  const auto xv = x.data();
  for (std::int64_t i = 0; i < s.n * s.c; ++i) {
    double acc = 0.0;
    for (std::int64_t p = 0; p < plane; ++p) acc += xv[i * plane + p];
    out[i] = static_cast<float>(acc / static_cast<double>(plane));
  }
  return detail::make_result({s.n, s.c, 1, 1}, std::move(out), {x}, [x](std::span<const float> g) {
    Tensor tx = x;
    const std::int64_t plane = x.shape().plane();
    auto gx = tx.grad_buffer();
    const float inv = 1.0f / static_cast<float>(plane);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i / plane] * inv;
  });
}

// ---------------------------------------------------------------------------

Tensor resample(const Tensor& x, Resample factor) {
  const Shape& s = x.shape();
  if (factor == Resample::down2) {
    if (s.h % 2 != 0) throw DimensionError("height", "down2 requires an even height, got " + std::to_string(s.h));
    if (s.w % 2 != 0) throw DimensionError("width", "down2 requires an even width, got " + std::to_string(s.w));
  }
  const bool up = factor == Resample::up2;
  const Shape so{s.n, s.c, up ? s.h * 2 : s.h / 2, up ? s.w * 2 : s.w / 2};
  auto out = buffer(so.numel());
  const auto xv = x.data();
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc)
    for (std::int64_t i = 0; i < so.h; ++i)
      for (std::int64_t j = 0; j < so.w; ++j) {
        const std::int64_t si = up ? i / 2 : i * 2;
        const std::int64_t sj = up ? j / 2 : j * 2;
        out[(nc * so.h + i) * so.w + j] = xv[(nc * s.h + si) * s.w + sj];
      }
  return detail::make_result(so, std::move(out), {x}, [x, so, up](std::span<const float> g) {
    Tensor tx = x;
    const Shape& s = x.shape();
    auto gx = tx.grad_buffer();
    for (std::int64_t nc = 0; nc < s.n * s.c; ++nc)
      for (std::int64_t i = 0; i < so.h; ++i)
        for (std::int64_t j = 0; j < so.w; ++j) {
          const std::int64_t si = up ? i / 2 : i * 2;
          const std::int64_t sj = up ? j / 2 : j * 2;
          gx[(nc * s.h + si) * s.w + sj] += g[(nc * so.h + i) * so.w + j];
        }
  });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ParameterError("concat_channels: no inputs");
  Shape so = parts.front().shape();
  so.c = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.n != so.n) throw DimensionError("batch", "concat_channels: batch mismatch");
    if (s.h != so.h) throw DimensionError("height", "concat_channels: height mismatch");
    if (s.w != so.w) throw DimensionError("width", "concat_channels: width mismatch");
    so.c += s.c;
  }
  const std::int64_t plane = so.plane();
  auto out = buffer(so.numel());
  for (std::int64_t n = 0; n < so.n; ++n) {
    std::int64_t offset = 0;
    for (const Tensor& p : parts) {
      const std::int64_t len = p.shape().c * plane;
      const float* src = p.data().data() + n * len;
      std::copy(src, src + len, out.begin() + n * so.c * plane + offset);
      offset += len;
    }
  }
  return detail::make_result(so, std::move(out), parts, [parts, so](std::span<const float> g) {
    const std::int64_t plane = so.plane();
    std::int64_t offset = 0;
    for (const Tensor& p : parts) {
      const std::int64_t len = p.shape().c * plane;
      if (p.requires_grad()) {
        Tensor tp = p;
        auto gp = tp.grad_buffer();
        for (std::int64_t n = 0; n < so.n; ++n)
          for (std::int64_t i = 0; i < len; ++i) gp[n * len + i] += g[n * so.c * plane + offset + i];
      }
      offset += len;
    }
  });
}

Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t count) {
  const Shape& s = x.shape();
  if (begin < 0 || count <= 0 || begin + count > s.c) {
    throw DimensionError("channel", "slice [" + std::to_string(begin) + ", " +
                                        std::to_string(begin + count) + ") out of " +
                                        std::to_string(s.c) + " channels");
  }
  const Shape so{s.n, count, s.h, s.w};
  const std::int64_t plane = s.plane();
  auto out = buffer(so.numel());
  for (std::int64_t n = 0; n < s.n; ++n) {
    const float* src = x.data().data() + (n * s.c + begin) * plane;
    std::copy(src, src + count * plane, out.begin() + n * count * plane);
  }
  return detail::make_result(so, std::move(out), {x}, [x, begin, count](std::span<const float> g) {
    Tensor tx = x;
    const Shape& s = x.shape();
    const std::int64_t plane = s.plane();
    auto gx = tx.grad_buffer();
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t i = 0; i < count * plane; ++i)
        gx[(n * s.c + begin) * plane + i] += g[n * count * plane + i];
  });
}

// ---------------------------------------------------------------------------

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const Shape& s = x.shape();
  if (gamma.numel() != s.c || beta.numel() != s.c) {
    throw DimensionError("channel", "instance_norm: affine parameters must have " +
                                        std::to_string(s.c) + " elements");
  }
  const std::int64_t plane = s.plane();
  if (plane == 0) throw DimensionError("height", "instance_norm over an empty plane");
  auto out = buffer(s.numel());
  auto xhat = std::make_shared<std::vector<float>>(out.size());
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<std::size_t>(s.n * s.c));
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const std::int64_t base = (n * s.c + c) * plane;
      double mu = 0.0;
      for (std::int64_t p = 0; p < plane; ++p) mu += xv[base + p];
      mu /= static_cast<double>(plane);
      double var = 0.0;
      for (std::int64_t p = 0; p < plane; ++p) {
        const double d = xv[base + p] - mu;
        var += d * d;
      }
      var /= static_cast<double>(plane);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[n * s.c + c] = static_cast<float>(is);
      for (std::int64_t p = 0; p < plane; ++p) {
        const float xh = static_cast<float>((xv[base + p] - mu) * is);
        (*xhat)[base + p] = xh;
        out[base + p] = gv[c] * xh + bv[c];
      }
    }
  return detail::make_result(s, std::move(out), {x, gamma, beta},
                             [x, gamma, beta, xhat, inv_std](std::span<const float> g) {
    Tensor tx = x;
    Tensor tg = gamma;
    Tensor tb = beta;
    const Shape& s = x.shape();
    const std::int64_t plane = s.plane();
    const auto gv = gamma.data();
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c) {
        const std::int64_t base = (n * s.c + c) * plane;
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (std::int64_t p = 0; p < plane; ++p) {
          sum_g += g[base + p];
          sum_gx += static_cast<double>(g[base + p]) * (*xhat)[base + p];
        }
        if (tg.requires_grad()) tg.grad_buffer()[c] += static_cast<float>(sum_gx);
        if (tb.requires_grad()) tb.grad_buffer()[c] += static_cast<float>(sum_g);
        if (tx.requires_grad()) {
          auto gx = tx.grad_buffer();
          const double mean_g = sum_g / static_cast<double>(plane);
          const double mean_gx = sum_gx / static_cast<double>(plane);
          const double k = static_cast<double>(gv[c]) * (*inv_std)[n * s.c + c];
          for (std::int64_t p = 0; p < plane; ++p) {
            gx[base + p] += static_cast<float>(
                k * (g[base + p] - mean_g - (*xhat)[base + p] * mean_gx));
          }
        }
      }
  });
}

Tensor pearson_channels(const Tensor& a, const Tensor& b, float eps) {
  const Shape& s = a.shape();
  if (b.shape() != s) {
    throw DimensionError(b.shape().c != s.c ? "channel" : "spatial",
                         "pearson: shape " + b.shape().str() + " vs " + s.str());
  }
  if (s.c < 2) throw DimensionError("channel", "pearson needs at least two channels");
  const std::int64_t plane = s.plane();
  const std::int64_t C = s.c;
  const Shape so{s.n, 1, s.h, s.w};
  auto out = buffer(so.numel());
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> ac(C), bc(C);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t p = 0; p < plane; ++p) {
      double ma = 0.0, mb = 0.0;
      for (std::int64_t c = 0; c < C; ++c) {
        ma += av[(n * C + c) * plane + p];
        mb += bv[(n * C + c) * plane + p];
      }
      ma /= static_cast<double>(C);
      mb /= static_cast<double>(C);
      double cov = 0.0, va = 0.0, vb = 0.0;
      for (std::int64_t c = 0; c < C; ++c) {
        ac[c] = av[(n * C + c) * plane + p] - ma;
        bc[c] = bv[(n * C + c) * plane + p] - mb;
        cov += ac[c] * bc[c];
        va += ac[c] * ac[c];
        vb += bc[c] * bc[c];
      }
      out[n * plane + p] = static_cast<float>(cov / (std::sqrt(va) * std::sqrt(vb) + eps));
    }
  return detail::make_result(so, std::move(out), {a, b}, [a, b, eps](std::span<const float> g) {
    Tensor ta = a;
    Tensor tb = b;
    const Shape& s = a.shape();
    const std::int64_t plane = s.plane();
    const std::int64_t C = s.c;
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> ac(C), bc(C);
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t p = 0; p < plane; ++p) {
        const double go = g[n * plane + p];
        if (go == 0.0) continue;
        double ma = 0.0, mb = 0.0;
        for (std::int64_t c = 0; c < C; ++c) {
          ma += av[(n * C + c) * plane + p];
          mb += bv[(n * C + c) * plane + p];
        }
        ma /= static_cast<double>(C);
        mb /= static_cast<double>(C);
        double cov = 0.0, va = 0.0, vb = 0.0;
        for (std::int64_t c = 0; c < C; ++c) {
          ac[c] = av[(n * C + c) * plane + p] - ma;
          bc[c] = bv[(n * C + c) * plane + p] - mb;
          cov += ac[c] * bc[c];
          va += ac[c] * ac[c];
          vb += bc[c] * bc[c];
        }
        const double sa = std::sqrt(va);
        const double sb = std::sqrt(vb);
        const double d = sa * sb + eps;
        // Both partials are already zero-mean over channels, so the
        // centering Jacobian leaves them unchanged.
        if (ta.requires_grad()) {
          auto ga = ta.grad_buffer();
          const double k = sa > 0.0 ? cov * sb / (sa * d * d) : 0.0;
          for (std::int64_t c = 0; c < C; ++c)
            ga[(n * C + c) * plane + p] += static_cast<float>(go * (bc[c] / d - k * ac[c]));
        }
        if (tb.requires_grad()) {
          auto gb = tb.grad_buffer();
          const double k = sb > 0.0 ? cov * sa / (sb * d * d) : 0.0;
          for (std::int64_t c = 0; c < C; ++c)
            gb[(n * C + c) * plane + p] += static_cast<float>(go * (ac[c] / d - k * bc[c]));
        }
      }
  });
}

Tensor l2_normalize_channels(const Tensor& x, float eps) {
  const Shape& s = x.shape();
  const std::int64_t plane = s.plane();
  auto out = buffer(s.numel());
  auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(s.n * plane));
  const auto xv = x.data();
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t p = 0; p < plane; ++p) {
      double ss = 0.0;
      for (std::int64_t c = 0; c < s.c; ++c) {
        const double v = xv[(n * s.c + c) * plane + p];
        ss += v * v;
      }
      const double norm = std::sqrt(ss);
      (*norms)[n * plane + p] = norm;
      for (std::int64_t c = 0; c < s.c; ++c) {
        const std::int64_t i = (n * s.c + c) * plane + p;
        out[i] = static_cast<float>(xv[i] / (norm + eps));
      }
    }
  return detail::make_result(s, std::move(out), {x}, [x, norms, eps](std::span<const float> g) {
    Tensor tx = x;
    const Shape& s = x.shape();
    const std::int64_t plane = s.plane();
    const auto xv = x.data();
    auto gx = tx.grad_buffer();
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t p = 0; p < plane; ++p) {
        const double norm = (*norms)[n * plane + p];
        const double d = norm + eps;
        double dot = 0.0;
        for (std::int64_t c = 0; c < s.c; ++c) {
          const std::int64_t i = (n * s.c + c) * plane + p;
          dot += static_cast<double>(g[i]) * xv[i];
        }
        const double k = norm > 0.0 ? dot / (norm * d * d) : 0.0;
        for (std::int64_t c = 0; c < s.c; ++c) {
          const std::int64_t i = (n * s.c + c) * plane + p;
          gx[i] += static_cast<float>(g[i] / d - k * xv[i]);
        }
      }
  });
}

Tensor gather_spatial(const Tensor& x, const std::vector<std::vector<std::int64_t>>& indices) {
  const Shape& s = x.shape();
  if (static_cast<std::int64_t>(indices.size()) != s.n) {
    throw DimensionError("batch", "gather_spatial: one index list per sample required");
  }
  const std::int64_t k = indices.empty() ? 0 : static_cast<std::int64_t>(indices.front().size());
  const std::int64_t plane = s.plane();
  for (const auto& list : indices) {
    if (static_cast<std::int64_t>(list.size()) != k) {
      throw DimensionError("width", "gather_spatial: index lists differ in length");
    }
    for (std::int64_t idx : list)
      if (idx < 0 || idx >= plane) throw DimensionError("spatial", "gather_spatial: index out of range");
  }
  const Shape so{s.n, s.c, 1, k};
  auto out = buffer(so.numel());
  const auto xv = x.data();
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t j = 0; j < k; ++j)
        out[(n * s.c + c) * k + j] = xv[(n * s.c + c) * plane + indices[n][j]];
  return detail::make_result(so, std::move(out), {x}, [x, indices, k](std::span<const float> g) {
    Tensor tx = x;
    const Shape& s = x.shape();
    const std::int64_t plane = s.plane();
    auto gx = tx.grad_buffer();
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c)
        for (std::int64_t j = 0; j < k; ++j)
          gx[(n * s.c + c) * plane + indices[n][j]] += g[(n * s.c + c) * k + j];
  });
}

Tensor info_nce(const Tensor& pos, const Tensor& neg) {
  const Shape& sp = pos.shape();
  const Shape& sn = neg.shape();
  if (sp.c != 1 || sp.h != 1 || sn.c != 1 || sn.h != 1) {
    throw DimensionError("channel", "info_nce expects (N,1,1,A) and (N,1,1,K) logits");
  }
  if (sp.n != sn.n) throw DimensionError("batch", "info_nce: batch mismatch");
  if (sp.w == 0) throw DimensionError("width", "info_nce: no anchors");
  const std::int64_t anchors = sp.w;
  const std::int64_t negatives = sn.w;
  const auto pv = pos.data();
  const auto nv = neg.data();
  double total = 0.0;
  for (std::int64_t n = 0; n < sp.n; ++n) {
    double neg_max = -std::numeric_limits<double>::infinity();
    for (std::int64_t k = 0; k < negatives; ++k) neg_max = std::max<double>(neg_max, nv[n * negatives + k]);
    for (std::int64_t a = 0; a < anchors; ++a) {
      const double p = pv[n * anchors + a];
      const double m = std::max(p, neg_max);
      double z = std::exp(p - m);
      for (std::int64_t k = 0; k < negatives; ++k) z += std::exp(nv[n * negatives + k] - m);
      total += -p + m + std::log(z);
    }
  }
  const double count = static_cast<double>(sp.n * anchors);
  return detail::make_result({1, 1, 1, 1}, {static_cast<float>(total / count)}, {pos, neg},
                             [pos, neg, count](std::span<const float> g) {
    Tensor tp = pos;
    Tensor tn = neg;
    const Shape& sp = pos.shape();
    const std::int64_t anchors = sp.w;
    const std::int64_t negatives = neg.shape().w;
    const auto pv = pos.data();
    const auto nv = neg.data();
    const double scale = g[0] / count;
    for (std::int64_t n = 0; n < sp.n; ++n) {
      double neg_max = -std::numeric_limits<double>::infinity();
      for (std::int64_t k = 0; k < negatives; ++k) neg_max = std::max<double>(neg_max, nv[n * negatives + k]);
      std::vector<double> gneg(static_cast<std::size_t>(negatives), 0.0);
      for (std::int64_t a = 0; a < anchors; ++a) {
        const double p = pv[n * anchors + a];
        const double m = std::max(p, neg_max);
        double z = std::exp(p - m);
        for (std::int64_t k = 0; k < negatives; ++k) z += std::exp(nv[n * negatives + k] - m);
        if (tp.requires_grad()) {
          tp.grad_buffer()[n * anchors + a] += static_cast<float>(scale * (std::exp(p - m) / z - 1.0));
        }
        for (std::int64_t k = 0; k < negatives; ++k) gneg[k] += std::exp(nv[n * negatives + k] - m) / z;
      }
      if (tn.requires_grad()) {
        auto gn = tn.grad_buffer();
        for (std::int64_t k = 0; k < negatives; ++k) gn[n * negatives + k] += static_cast<float>(scale * gneg[k]);
      }
    }
  });
}

Tensor detach(const Tensor& x) { return x.clone(); }

}  // namespace dico::ops
