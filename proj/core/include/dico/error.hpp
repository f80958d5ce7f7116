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

#include <stdexcept>
#include <string>

namespace dico {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not fit the operation. `axis` names the offending axis
// ("batch", "channel", "height", "width", or an operation-specific label).
class DimensionError : public Error {
 public:
  DimensionError(std::string axis, const std::string& what)
      : Error("dimension error [" + axis + "]: " + what), axis_(std::move(axis)) {}
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// A loss term or gradient became NaN/Inf during training.
class TrainingAbort : public Error {
 public:
  TrainingAbort(std::string term, long iteration, const std::string& what)
      : Error("training aborted at iteration " + std::to_string(iteration) + " (" + term +
              "): " + what),
        term_(std::move(term)),
        iteration_(iteration) {}
  const std::string& term() const noexcept { return term_; }
  long iteration() const noexcept { return iteration_; }

 private:
  std::string term_;
  long iteration_;
};

}  // namespace dico
