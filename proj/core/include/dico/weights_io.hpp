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

#include <filesystem>
#include <string>
#include <vector>

#include "dico/tensor.hpp"

namespace dico {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using WeightSet = std::vector<NamedTensor>;

// Weight file layout (all integers little-endian u32):
//   "DICOW1" | count | count x { name_len | name (UTF-8) | n c h w | f32 LE values }
inline constexpr char kWeightMagic[] = "DICOW1";

std::vector<unsigned char> encode_weights(const WeightSet& weights);
WeightSet decode_weights(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>");

void save_weights(const WeightSet& weights, const std::filesystem::path& path);
WeightSet load_weights(const std::filesystem::path& path);

// Looks up `name`; throws IoError naming `origin` when absent.
const Tensor& find_weight(const WeightSet& weights, const std::string& name,
                          const std::string& origin = "<weights>");

}  // namespace dico
