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

#include "dico/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "dico/data.hpp"
#include "dico/error.hpp"
#include "dico/pipeline.hpp"
#include "json.hpp"

namespace dico::eval {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

const char* const kFrechetCaveat =
    "feature-Frechet distances use the bundled extractor's pooled stage-4 features; they are not "
    "Inception FID values and are only meaningful as relative comparisons";

namespace {

Mat to_matrix(const FeatureGaussian& g) {
  const auto d = static_cast<Eigen::Index>(g.dim());
  Mat m(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = g.cov[static_cast<std::size_t>(i * d + j)];
  return m;
}

// Symmetric PSD square root with eigenvalues clamped at zero.
Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

FeatureGaussian fit_gaussian(const std::vector<std::vector<double>>& samples) {
  if (samples.empty()) throw ParameterError("fit_gaussian: no samples");
  const std::size_t d = samples.front().size();
  if (d == 0) throw DimensionError("channel", "fit_gaussian: zero-dimensional samples");
  for (const auto& s : samples)
    if (s.size() != d) throw DimensionError("channel", "fit_gaussian: samples differ in dimension");
  FeatureGaussian g;
  g.count = samples.size();
  g.mean.assign(d, 0.0);
  for (const auto& s : samples)
    for (std::size_t i = 0; i < d; ++i) g.mean[i] += s[i];
  for (double& m : g.mean) m /= static_cast<double>(g.count);
  g.cov.assign(d * d, 0.0);
  if (g.count > 1) {
    for (const auto& s : samples)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) g.cov[i * d + j] += (s[i] - g.mean[i]) * (s[j] - g.mean[j]);
    const double norm = 1.0 / static_cast<double>(g.count - 1);
    for (double& c : g.cov) c *= norm;
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (g.cov[i * d + j] + g.cov[j * d + i]);
      g.cov[i * d + j] = avg;
      g.cov[j * d + i] = avg;
    }
  for (std::size_t i = 0; i < d; ++i) g.cov[i * d + i] += kShrinkage;
  return g;
}

std::vector<std::vector<double>> pooled_features(const std::vector<Tensor>& images, const FeatureExtractor& extractor,
                                                 const std::string& stage) {
  if (images.empty()) throw ParameterError("pooled_features: no images");
  std::vector<std::vector<double>> out;
  NoGradScope ng;
  for (const Tensor& image : images) {
    const Tensor f = extractor.extract(image, true).at(stage);
    const Shape& s = f.shape();
    const auto v = f.data();
    for (std::int64_t n = 0; n < s.n; ++n) {
      std::vector<double> row(static_cast<std::size_t>(s.c), 0.0);
      for (std::int64_t c = 0; c < s.c; ++c) {
        double acc = 0.0;
        const float* p = v.data() + (n * s.c + c) * s.plane();
        for (std::int64_t i = 0; i < s.plane(); ++i) acc += p[i];
        row[static_cast<std::size_t>(c)] = acc / static_cast<double>(s.plane());
      }
      out.push_back(std::move(row));
    }
  }
  return out;
}

FeatureGaussian fit_gaussian(const std::vector<Tensor>& images, const FeatureExtractor& extractor,
                             const std::string& stage) {
  return fit_gaussian(pooled_features(images, extractor, stage));
}

double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("channel", "frechet_distance: dimensions " + std::to_string(a.dim()) + " and " +
                                        std::to_string(b.dim()) + " differ");
  }
  if (a.dim() == 0) throw DimensionError("channel", "frechet_distance: empty Gaussian");
  double mean_term = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
  const Mat s1 = to_matrix(a);
  const Mat s2 = to_matrix(b);
  const Mat r1 = psd_sqrt(s1);
  const Mat inner = r1 * s2 * r1;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  double cross = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) cross += std::sqrt(std::max(0.0, es.eigenvalues()(i)));
  const double d = mean_term + s1.trace() + s2.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

MaskMetrics mask_metrics(const Tensor& pred, const Tensor& truth, float threshold) {
  if (pred.shape() != truth.shape()) {
    throw DimensionError("spatial", "mask_metrics: " + pred.shape().str() + " vs " + truth.shape().str());
  }
  const auto p = pred.data();
  const auto t = truth.data();
  std::size_t inter = 0, uni = 0, n_fg = 0, n_bg = 0;
  double sum_fg = 0.0, sum_bg = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool fg_pred = (1.0f - p[i]) > threshold;
    const bool fg_true = t[i] > 0.5f;
    inter += fg_pred && fg_true;
    uni += fg_pred || fg_true;
    if (fg_true) {
      sum_fg += p[i];
      ++n_fg;
    } else {
      sum_bg += p[i];
      ++n_bg;
    }
  }
  MaskMetrics m;
  m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  const double mean_bg = n_bg ? sum_bg / static_cast<double>(n_bg) : 0.0;
  const double mean_fg = n_fg ? sum_fg / static_cast<double>(n_fg) : 0.0;
  m.separation = (n_bg && n_fg) ? mean_bg - mean_fg : 0.0;
  return m;
}

Tensor downsample_mask(const Image& mask, std::int64_t height, std::int64_t width) {
  if (mask.channels != 1) throw DimensionError("channel", "downsample_mask expects a single-channel mask");
  std::vector<float> out(static_cast<std::size_t>(height * width));
  for (std::int64_t y = 0; y < height; ++y)
    for (std::int64_t x = 0; x < width; ++x) {
      const int sy = static_cast<int>(y * mask.height / height);
      const int sx = static_cast<int>(x * mask.width / width);
      out[static_cast<std::size_t>(y * width + x)] = mask.at(sy, sx) > 0.5f ? 1.0f : 0.0f;
    }
  return Tensor({1, 1, height, width}, std::move(out));
}

std::string Report::to_json() const {
  nlohmann::ordered_json j;
  j["frechet_before"] = frechet_before;
  j["frechet_after"] = frechet_after;
  j["mask_iou_per_stage"] = mask_iou_per_stage;
  j["separation_per_stage"] = separation_per_stage;
  j["background_l1_night"] = background_l1_night;
  j["background_l1_translated"] = background_l1_translated;
  j["frames"] = frames;
  j["note"] = kFrechetCaveat;
  return j.dump(2) + "\n";
}

Report evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& scene_dir) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  TrainConfig config = ck.config;
  config.resume_from.clear();
  Trainer trained(config);
  trained.load_checkpoint(ck, checkpoint.string());
  Trainer untrained(config);

  const SceneDataset ds = load_scene(scene_dir, true);
  const Tensor reference = to_tensor(ds.reference);
  trained.set_reference(reference);
  const std::vector<Image> truth = load_night_masks(ds);

  std::vector<Tensor> day, before, after;
  for (const Image& im : ds.day) day.push_back(to_tensor(im));
  Report r;
  r.frames = ds.night.size();
  std::map<std::string, double> iou_acc, sep_acc;
  double l1_night = 0.0, l1_out = 0.0;
  std::size_t bg_pixels = 0;
  const auto ref = reference.data();
  for (std::size_t i = 0; i < ds.night.size(); ++i) {
    const Tensor night = to_tensor(ds.night[i]);
    before.push_back(untrained.translate(night));
    const Tensor out = trained.translate(night);
    after.push_back(out);
    const auto nv = night.data();
    const auto ov = out.data();
    const std::int64_t plane = night.shape().plane();
    for (std::int64_t p = 0; p < plane; ++p) {
      if (!truth.empty() && truth[i].values[static_cast<std::size_t>(p)] > 0.5f) continue;
      for (std::int64_t c = 0; c < 3; ++c) {
        const std::size_t k = static_cast<std::size_t>(c * plane + p);
        l1_night += std::abs(nv[k] - ref[k]);
        l1_out += std::abs(ov[k] - ref[k]);
      }
      ++bg_pixels;
    }
    if (!truth.empty()) {
      const MaskSet masks = trained.masks_of(out);
      for (const auto& st : config.stages) {
        const Tensor& m = masks.mask(st);
        const MaskMetrics mm = mask_metrics(m, downsample_mask(truth[i], m.shape().h, m.shape().w), config.threshold);
        iou_acc[st] += mm.iou;
        sep_acc[st] += mm.separation;
      }
    }
  }
  if (bg_pixels > 0) {
    r.background_l1_night = l1_night / static_cast<double>(bg_pixels * 3);
    r.background_l1_translated = l1_out / static_cast<double>(bg_pixels * 3);
  }
  for (const auto& [st, v] : iou_acc) r.mask_iou_per_stage[st] = v / static_cast<double>(r.frames);
  for (const auto& [st, v] : sep_acc) r.separation_per_stage[st] = v / static_cast<double>(r.frames);

  const FeatureExtractor& ex = trained.extractor();
  const FeatureGaussian g_day = fit_gaussian(day, ex);
  r.frechet_before = frechet_distance(fit_gaussian(before, ex), g_day);
  r.frechet_after = frechet_distance(fit_gaussian(after, ex), g_day);
  return r;
}

}  // namespace dico::eval
