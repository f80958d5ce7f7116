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

#include "dico/tensor.hpp"

#include <algorithm>

#include "dico/error.hpp"

namespace dico {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("shape", "negative extent in " + shape.str());
  }
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw DimensionError("shape", "value count " + std::to_string(values.size()) +
                                      " does not match " + shape.str());
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = shape;
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(shape, 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  return Tensor(shape, std::vector<float>(static_cast<std::size_t>(shape.numel()), value),
                requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor({1, 1, 1, 1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw StateError("use of an undefined tensor");
  return impl_->shape;
}

std::span<const float> Tensor::data() const {
  if (!impl_) throw StateError("use of an undefined tensor");
  return impl_->data;
}

std::span<float> Tensor::mutable_data() {
  if (!impl_) throw StateError("use of an undefined tensor");
  return impl_->data;
}

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape().str());
  return impl_->data[0];
}

float Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
  const Shape& s = shape();
  return impl_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!impl_) throw StateError("use of an undefined tensor");
  impl_->requires_grad = value;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!has_grad()) throw StateError("tensor has no gradient");
  return impl_->grad;
}

std::span<float> Tensor::grad_buffer() {
  if (!impl_) throw StateError("use of an undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::clone() const { return Tensor(shape(), impl_->data, false); }

void Tape::record(Tensor output, BackwardFn fn) {
  if (consumed_) throw StateError("recording onto a consumed tape");
  entries_.push_back({std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw StateError("backward called twice on a consumed tape");
  if (!loss.defined() || loss.shape() != Shape{1, 1, 1, 1}) {
    throw ContractError("backward requires a scalar (1,1,1,1) loss");
  }
  const bool on_tape = std::any_of(entries_.begin(), entries_.end(),
                                   [&](const Entry& e) { return e.output.id() == loss.id(); });
  if (!on_tape) throw ContractError("loss is not connected to this tape");

  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->fn(it->output.grad());
  }
  consumed_ = true;
  // Releases saved intermediates; leaf gradients stay with their tensors.
  entries_.clear();
  entries_.shrink_to_fit();
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw StateError("backward without an active tape");
  tape->backward(loss);
}

namespace detail {

Tensor make_result(Shape shape, std::vector<float> values, const std::vector<Tensor>& inputs,
                   Tape::BackwardFn fn) {
  Tape* tape = Tape::active();
  const bool track =
      tape != nullptr && std::any_of(inputs.begin(), inputs.end(),
                                     [](const Tensor& t) { return t.requires_grad(); });
  Tensor out(shape, std::move(values), track);
  if (track) tape->record(out, std::move(fn));
  return out;
}

Tensor make_result(Shape shape, std::vector<float> values, std::initializer_list<Tensor> inputs,
                   Tape::BackwardFn fn) {
  return make_result(shape, std::move(values), std::vector<Tensor>(inputs), std::move(fn));
}

}  // namespace detail

}  // namespace dico
