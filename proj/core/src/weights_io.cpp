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

#include "dico/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dico/error.hpp"

namespace dico {

namespace {

constexpr std::size_t kMagicLen = sizeof(kWeightMagic) - 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string text(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }

  void need(std::size_t len) const {
    if (bytes_.size() - pos_ < len) throw IoError(origin_, "truncated weight file");
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<unsigned char>& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_weights(const WeightSet& weights) {
  std::vector<unsigned char> out(kWeightMagic, kWeightMagic + kMagicLen);
  put_u32(out, static_cast<std::uint32_t>(weights.size()));
  for (const auto& [name, tensor] : weights) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const Shape& s = tensor.shape();
    for (std::int64_t e : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

WeightSet decode_weights(const std::vector<unsigned char>& bytes, const std::string& origin) {
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kWeightMagic, kMagicLen) != 0) {
    throw IoError(origin, "not a DICOW1 weight file");
  }
  std::vector<unsigned char> body(bytes.begin() + kMagicLen, bytes.end());
  Reader r(body, origin);
  const std::uint32_t count = r.u32();
  WeightSet out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    std::string name = r.text(len);
    Shape s;
    s.n = r.u32();
    s.c = r.u32();
    s.h = r.u32();
    s.w = r.u32();
    r.need(static_cast<std::size_t>(s.numel()) * 4);
    std::vector<float> values(static_cast<std::size_t>(s.numel()));
    for (float& v : values) v = std::bit_cast<float>(r.u32());
    out.push_back({std::move(name), Tensor(s, std::move(values))});
  }
  if (!r.done()) throw IoError(origin, "trailing bytes after weight records");
  return out;
}

void save_weights(const WeightSet& weights, const std::filesystem::path& path) {
  const auto bytes = encode_weights(weights);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path.string(), "cannot open for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(path.string(), "write failed");
}

WeightSet load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string(), "cannot open weight file");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_weights(bytes, path.string());
}

const Tensor& find_weight(const WeightSet& weights, const std::string& name, const std::string& origin) {
  for (const auto& entry : weights)
    if (entry.name == name) return entry.tensor;
  throw IoError(origin, "missing tensor '" + name + "'");
}

}  // namespace dico
