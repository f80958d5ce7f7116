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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dico/feature_extractor.hpp"
#include "dico/image.hpp"
#include "dico/tensor.hpp"

namespace dico::eval {

inline constexpr double kShrinkage = 1e-6;

// Mean and covariance (row-major d x d) of a feature sample.
struct FeatureGaussian {
  std::vector<double> mean;
  std::vector<double> cov;
  std::size_t count = 0;

  std::size_t dim() const { return mean.size(); }
};

// Unbiased covariance (n - 1; zero for a single sample), symmetrised, plus
// kShrinkage on the diagonal.
FeatureGaussian fit_gaussian(const std::vector<std::vector<double>>& samples);

// Spatial means of `stage` activations, one vector per image.
std::vector<std::vector<double>> pooled_features(const std::vector<Tensor>& images, const FeatureExtractor& extractor,
                                                 const std::string& stage = "stage4");
FeatureGaussian fit_gaussian(const std::vector<Tensor>& images, const FeatureExtractor& extractor,
                             const std::string& stage = "stage4");

// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b);

struct MaskMetrics {
  double iou = 0.0;
  double separation = 0.0;
};

// `pred` is a soft background mask (B,1,h,w); `truth` a binary foreground
// mask of the same shape. Foreground prediction is (1 - M) > threshold.
MaskMetrics mask_metrics(const Tensor& pred, const Tensor& truth, float threshold = 0.5f);

// Nearest downsampling of a single-channel foreground mask: output pixel
// (y, x) takes the input at (y * H / h, x * W / w), binarised at 0.5.
Tensor downsample_mask(const Image& mask, std::int64_t height, std::int64_t width);

struct Report {
  double frechet_before = 0.0;
  double frechet_after = 0.0;
  std::map<std::string, double> mask_iou_per_stage;
  std::map<std::string, double> separation_per_stage;
  double background_l1_night = 0.0;
  double background_l1_translated = 0.0;
  std::size_t frames = 0;

  std::string to_json() const;
};

// Evaluates the checkpoint against the scene: feature-Frechet of translated
// night frames vs day frames (trained and untrained generator), per-stage
// mask quality against masks/night_*.png when present, and background-region
// L1 to the reference.
Report evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& scene_dir);

// Printed alongside every report.
extern const char* const kFrechetCaveat;

}  // namespace dico::eval
