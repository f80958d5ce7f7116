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
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dico {

// Extents of a rank-4 (batch, channel, height, width) tensor.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  constexpr std::int64_t numel() const { return n * c * h * w; }
  constexpr std::int64_t plane() const { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

/// Dense float32 tensor in row-major (n, c, h, w) order.
///
/// `Tensor` is a shared handle: copies alias the same storage. Values are
/// treated as immutable once an operation has consumed them; the only
/// sanctioned in-place writes are optimizer updates of leaf parameters,
/// performed while no tape is recording.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::int64_t numel() const { return shape().numel(); }

  std::span<const float> data() const;
  std::span<float> mutable_data();
  float item() const;
  float at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const float> grad() const;
  // Gradient buffer, allocated (zero-filled) on first access.
  std::span<float> grad_buffer();
  void zero_grad();

  // Fresh tensor with copied values and no tape history.
  Tensor clone() const;

  // Identity of the underlying storage.
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations executed while the tape is
/// active on the current thread (see `TapeScope`).
///
/// `backward` replays the record in exact reverse order; gradients
/// accumulate additively into every input that requires them. A tape can be
/// consumed once.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const float> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Tensor output, BackwardFn fn);
  void backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return entries_.size(); }

  // Tape recording on this thread, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;
  friend class NoGradScope;

  struct Entry {
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

// Makes `tape` the active tape for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording for the lifetime of the scope.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Convenience wrapper: `loss` must be a (1,1,1,1) tensor recorded on the
// active tape.
void backward(const Tensor& loss);

namespace detail {

// Builds an op result. When a tape is active and any of `inputs` requires a
// gradient, the result is marked as requiring one and `fn` is recorded.
Tensor make_result(Shape shape, std::vector<float> values, std::initializer_list<Tensor> inputs,
                   Tape::BackwardFn fn);
Tensor make_result(Shape shape, std::vector<float> values, const std::vector<Tensor>& inputs,
                   Tape::BackwardFn fn);

}  // namespace detail

}  // namespace dico
