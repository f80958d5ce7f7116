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

#include "dico/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dico/color_invariants.hpp"
#include "dico/error.hpp"
#include "dico/ops.hpp"
#include "json.hpp"

namespace dico {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

#define DICO_TRAIN_FIELDS(X)                                                                             \
  X(seed) X(iterations) X(batch_size) X(lr_g) X(lr_d) X(beta1) X(beta2) X(adam_eps) X(w_adv) X(w_back)   \
  X(w_fore) X(tau) X(sigma) X(eps_inv) X(gamma) X(s0) X(threshold) X(stages) X(negatives) X(image_size) \
  X(residual_blocks) X(base_channels) X(extractor_seed) X(use_lci) X(use_l_fore) X(use_l_back)          \
  X(dataset_root) X(output_dir) X(log_every) X(sample_every) X(checkpoint_every) X(resume_from)

json config_object(const TrainConfig& c) {
  json j;
#define X(f) j[#f] = c.f;
  DICO_TRAIN_FIELDS(X)
#undef X
  return j;
}

TrainConfig config_from_object(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    try {
#define X(f)              \
  if (key == #f) {        \
    value.get_to(c.f);    \
    known = true;         \
  }
      DICO_TRAIN_FIELDS(X)
#undef X
    } catch (const json::exception& e) {
      throw ConfigError("train config field '" + key + "': " + e.what());
    }
    if (!known) throw ConfigError("unknown train config field '" + key + "'");
  }
  return c;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(path.string(), "cannot open");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError(path.string(), "cannot open for writing");
  f << text;
  if (!f) throw IoError(path.string(), "write failed");
}

Tensor tile_batch(const Tensor& x, std::int64_t n) {
  if (x.shape().n == n) return x;
  const auto v = x.data();
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(x.numel() * n));
  for (std::int64_t i = 0; i < n; ++i) out.insert(out.end(), v.begin(), v.end());
  return Tensor({n, x.shape().c, x.shape().h, x.shape().w}, std::move(out));
}

std::vector<NamedTensor> named_params(nn::Networks& nets, bool generator_side) {
  std::vector<NamedTensor> out;
  auto push = [&](const std::string& name, Tensor& t) { out.push_back({name, t}); };
  if (generator_side) {
    nets.visit_generator(push);
  } else {
    nets.visit_discriminator(push);
  }
  return out;
}

void set_trainable(const std::vector<NamedTensor>& params, bool value) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(value);
  }
}

// Nearest upsampling of a (1,1,h,w) plane to H x W.
Image upsample_plane(const Tensor& plane, std::int64_t sample, int height, int width) {
  const Shape& s = plane.shape();
  const auto v = plane.data();
  Image out(width, height, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::int64_t sy = y * s.h / height;
      const std::int64_t sx = x * s.w / width;
      const float m = v[(sample * s.c) * s.plane() + sy * s.w + sx];
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = m;
    }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations <= 0) throw ConfigError("iterations must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(lr_g > 0.0f) || !(lr_d > 0.0f)) throw ConfigError("learning rates must be positive");
  if (!(beta1 >= 0.0f && beta1 < 1.0f) || !(beta2 >= 0.0f && beta2 < 1.0f)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0f)) throw ConfigError("adam_eps must be positive");
  if (w_adv < 0.0f || w_back < 0.0f || w_fore < 0.0f) throw ConfigError("loss weights must be non-negative");
  if (!(tau > 0.0f)) throw ConfigError("tau must be positive");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(eps_inv > 0.0)) throw ConfigError("eps_inv must be positive");
  if (!(gamma > 0.0f)) throw ConfigError("gamma must be positive");
  if (negatives < 0) throw ConfigError("negatives must be non-negative");
  if (stages.empty()) throw ConfigError("at least one stage is required");
  const PyramidSpec spec = PyramidSpec::defaults(extractor_seed);
  for (const auto& st : stages) {
    const bool known = std::any_of(spec.stages.begin(), spec.stages.end(),
                                   [&](const StageSpec& s) { return s.name == st; });
    if (!known) throw ConfigError("unknown feature stage '" + st + "'");
  }
  const int factor = std::max(4, 1 << spec.downsample_count());
  if (image_size <= 0 || image_size % factor != 0) {
    throw ConfigError("image_size must be a positive multiple of " + std::to_string(factor));
  }
  if (image_size < nn::Discriminator::kMinExtent) throw ConfigError("image_size must be at least 32");
  if (residual_blocks < 0 || base_channels <= 0) throw ConfigError("invalid generator size");
  if (log_every <= 0) throw ConfigError("log_every must be positive");
  if (sample_every < 0 || checkpoint_every < 0) throw ConfigError("cadences must be non-negative");
}

std::string TrainConfig::to_json() const { return config_object(*this).dump(2) + "\n"; }

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config is not valid JSON: ") + e.what());
  }
  return config_from_object(j);
}

TrainConfig TrainConfig::load(const fs::path& path) { return from_json(read_text(path)); }

nn::GeneratorConfig TrainConfig::generator_config() const {
  nn::GeneratorConfig g;
  g.input_channels = use_lci ? 6 : 3;
  g.base_channels = base_channels;
  g.residual_blocks = residual_blocks;
  return g;
}

optim::AdamConfig TrainConfig::adam(float lr) const { return {lr, beta1, beta2, adam_eps}; }

loss::Weights TrainConfig::effective_weights() const {
  return {w_adv, use_l_back ? w_back : 0.0f, use_l_fore ? w_fore : 0.0f};
}

MaskParams TrainConfig::mask_params() const { return {gamma, s0, threshold}; }

fs::path checkpoint_sidecar(const fs::path& weights_path) {
  fs::path p = weights_path;
  return p.replace_extension(".json");
}

Checkpoint load_checkpoint(const fs::path& weights_path) {
  Checkpoint ck;
  ck.weights = load_weights(weights_path);
  const fs::path side = checkpoint_sidecar(weights_path);
  json j;
  try {
    j = json::parse(read_text(side));
  } catch (const json::exception& e) {
    throw IoError(side.string(), std::string("malformed checkpoint sidecar: ") + e.what());
  }
  if (!j.contains("config") || !j.contains("step")) throw IoError(side.string(), "sidecar lacks config or step");
  ck.config = config_from_object(j.at("config"));
  ck.step = j.at("step").get<std::int64_t>();
  return ck;
}

Trainer::Trainer(TrainConfig config)
    : config_(std::move(config)),
      nets_(nn::init_networks(config_.seed, config_.generator_config())),
      extractor_(PyramidSpec::defaults(config_.extractor_seed)) {
  config_.validate();
  opt_g_ = std::make_unique<optim::Adam>(named_params(nets_, true), config_.adam(config_.lr_g));
  opt_d_ = std::make_unique<optim::Adam>(named_params(nets_, false), config_.adam(config_.lr_d));
}

void Trainer::set_reference(const Tensor& reference) {
  if (reference.shape().n != 1 || reference.shape().c != 3) {
    throw DimensionError("batch", "reference must be a single RGB image, got " + reference.shape().str());
  }
  reference_ = reference;
  reference_cache_.clear();
}

const FeaturePyramid& Trainer::reference_pyramid(std::int64_t batch) {
  if (!reference_.defined()) throw StateError("reference background not set");
  auto it = reference_cache_.find(batch);
  if (it == reference_cache_.end()) {
    NoGradScope ng;
    it = reference_cache_.emplace(batch, extractor_.extract(tile_batch(reference_, batch), true)).first;
  }
  return it->second;
}

Tensor Trainer::generate(const Tensor& night) const {
  Tensor out;
  if (config_.use_lci) {
    const auto stack = color::invariants_of(night, config_.sigma, config_.eps_inv);
    out = nets_.generator.forward(night, nets_.ensemble.forward(stack));
  } else {
    out = nets_.generator.forward(night);
  }
  return ops::scale(ops::add_scalar(out, 1.0f), 0.5f);
}

loss::Report Trainer::step(const Batch& batch) {
  const std::int64_t it = iteration_ + 1;
  const Shape& s = batch.night.shape();
  if (s.h != config_.image_size || s.w != config_.image_size) {
    throw DimensionError("spatial", "batch " + s.str() + " does not match image_size " +
                                        std::to_string(config_.image_size));
  }
  const loss::Weights weights = config_.effective_weights();
  const FeaturePyramid& ref_pyr = reference_pyramid(s.n);
  loss::Report report;
  report.tau = config_.tau;

  Tensor fake;
  {
    const auto& d_params = opt_d_->params();
    set_trainable(d_params, false);
    Tape tape;
    {
      TapeScope scope(tape);
      fake = generate(batch.night);
      const Tensor adv = loss::l_adv({}, nets_.discriminator.forward(fake), loss::Side::generator);
      Tensor total_g = ops::scale(adv, weights.adv);
      report.l_adv_g = adv.item();
      if (config_.use_l_back || config_.use_l_fore) {
        const FeaturePyramid gen_pyr = extractor_.extract(fake, false);
        const MaskSet masks = compute_masks(gen_pyr, ref_pyr, config_.stages, config_.mask_params(), true);
        if (config_.use_l_back) {
          const auto lb = loss::l_back(gen_pyr, ref_pyr, masks, config_.stages);
          report.l_back = lb.total.item();
          for (const auto& [k, v] : lb.per_stage) report.back_per_stage[k] = v.item();
          total_g = ops::add(total_g, ops::scale(lb.total, weights.back));
        }
        if (config_.use_l_fore) {
          const FeaturePyramid night_pyr = extractor_.extract(batch.night, true);
          std::map<std::string, std::vector<std::vector<std::int64_t>>> negatives;
          for (const auto& st : config_.stages) {
            const Shape& ms = masks.mask(st).shape();
            const std::int64_t k =
                config_.negatives > 0 ? std::min<std::int64_t>(config_.negatives, ms.plane())
                                      : default_negative_count(ms.plane());
            negatives[st] = hard_negative_select(masks.scores(st), k);
          }
          const auto lf = loss::l_fore(gen_pyr, night_pyr, masks, negatives, config_.tau, config_.stages);
          report.l_fore = lf.total.item();
          report.fore_empty = lf.empty;
          for (const auto& [k, v] : lf.per_stage) report.fore_per_stage[k] = v.item();
          total_g = ops::add(total_g, ops::scale(lf.total, weights.fore));
        }
      }
      loss::total(report, weights, static_cast<long>(it));
      backward(total_g);
    }
    set_trainable(d_params, true);
    opt_g_->step(static_cast<long>(it));
  }

  {
    const Tensor detached = fake.clone();
    Tape tape;
    {
      TapeScope scope(tape);
      const Tensor d_real = nets_.discriminator.forward(batch.day);
      const Tensor d_fake = nets_.discriminator.forward(detached);
      const Tensor ld = loss::l_adv(d_real, d_fake, loss::Side::discriminator);
      report.l_adv_d = ld.item();
      loss::total(report, weights, static_cast<long>(it));
      backward(ld);
    }
    opt_d_->step(static_cast<long>(it));
  }
  iteration_ = it;
  return report;
}

Tensor Trainer::translate(const Tensor& night) const {
  NoGradScope ng;
  return generate(night);
}

Tensor Trainer::invariant_map(const Tensor& night) const {
  if (!config_.use_lci) return {};
  NoGradScope ng;
  return nets_.ensemble.forward(color::invariants_of(night, config_.sigma, config_.eps_inv));
}

MaskSet Trainer::masks_of(const Tensor& image) const {
  if (!reference_.defined()) throw StateError("reference background not set");
  NoGradScope ng;
  const FeaturePyramid pyr = extractor_.extract(image, true);
  const FeaturePyramid ref = extractor_.extract(tile_batch(reference_, image.shape().n), true);
  return compute_masks(pyr, ref, config_.stages, config_.mask_params(), false);
}

void Trainer::save_checkpoint(const fs::path& weights_path) {
  WeightSet w = nets_.collect();
  opt_g_->collect_state(w, "opt_g.");
  opt_d_->collect_state(w, "opt_d.");
  if (weights_path.has_parent_path()) fs::create_directories(weights_path.parent_path());
  save_weights(w, weights_path);
  json side;
  side["config"] = config_object(config_);
  side["step"] = iteration_;
  write_text(checkpoint_sidecar(weights_path), side.dump(2) + "\n");
}

void Trainer::load_checkpoint(const Checkpoint& ck, const std::string& origin) {
  if (ck.config.use_lci != config_.use_lci || ck.config.residual_blocks != config_.residual_blocks ||
      ck.config.base_channels != config_.base_channels) {
    throw ConfigError(origin + ": checkpoint architecture differs from the configured one");
  }
  nets_.load(ck.weights, origin);
  const bool has_state = std::any_of(ck.weights.begin(), ck.weights.end(),
                                     [](const NamedTensor& t) { return t.name == "opt_g.step"; });
  if (has_state) {
    opt_g_->load_state(ck.weights, "opt_g.", origin);
    opt_d_->load_state(ck.weights, "opt_d.", origin);
  }
  iteration_ = ck.step;
}

Image sample_grid(const Trainer& trainer, const Tensor& night, const Tensor& reference) {
  const Tensor first = night.shape().n == 1 ? night : to_tensor(to_image(night, 0));
  const int h = static_cast<int>(first.shape().h);
  const int w = static_cast<int>(first.shape().w);
  std::vector<Image> panels;
  panels.push_back(to_image(first));
  const Tensor xi = trainer.invariant_map(first);
  if (xi.defined()) {
    Image viz(w, h, 3);
    for (int c = 0; c < 3; ++c) {
      const Image plane = normalized_plane(xi, 0, c);
      for (std::size_t p = 0; p < viz.pixels(); ++p) viz.values[p * 3 + c] = plane.values[p];
    }
    panels.push_back(std::move(viz));
  } else {
    panels.emplace_back(w, h, 3);
  }
  const Tensor out = trainer.translate(first);
  const MaskSet masks = trainer.masks_of(out);
  panels.push_back(upsample_plane(masks.mask(trainer.config().stages.back()), 0, h, w));
  panels.push_back(to_image(out));
  panels.push_back(to_image(reference));
  Image grid(w * static_cast<int>(panels.size()), h, 3);
  for (std::size_t k = 0; k < panels.size(); ++k)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) grid.at(y, static_cast<int>(k) * w + x, c) = panels[k].at(y, x, c);
  return grid;
}

TrainResult train(const TrainConfig& config, const std::function<void(std::int64_t, const loss::Report&)>& progress) {
  config.validate();
  if (config.dataset_root.empty()) throw ConfigError("dataset_root is required");
  if (config.output_dir.empty()) throw ConfigError("output_dir is required");
  const SceneDataset dataset = load_scene(config.dataset_root, true);
  if (dataset.width() != config.image_size || dataset.height() != config.image_size) {
    throw ConfigError("dataset extents " + std::to_string(dataset.width()) + "x" +
                      std::to_string(dataset.height()) + " do not match image_size " +
                      std::to_string(config.image_size));
  }
  const fs::path out = config.output_dir;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError(out.string(), "cannot create output directory: " + ec.message());
  write_text(out / "config.json", config.to_json());

  Trainer trainer(config);
  const Tensor reference = to_tensor(dataset.reference);
  trainer.set_reference(reference);
  if (!config.resume_from.empty()) {
    const Checkpoint ck = load_checkpoint(config.resume_from);
    trainer.load_checkpoint(ck, config.resume_from);
  }
  BatchIterator batches(dataset, config.batch_size, config.seed);

  std::ofstream csv(out / "losses.csv", std::ios::trunc | std::ios::binary);
  if (!csv) throw IoError((out / "losses.csv").string(), "cannot open for writing");
  csv << loss::csv_header() << "\n";

  TrainResult result;
  for (std::int64_t t = trainer.iteration() + 1; t <= config.iterations; ++t) {
    const Batch batch = batches.at(t);
    const loss::Report report = trainer.step(batch);
    result.reports.push_back(report);
    if (t % config.log_every == 0 || t == config.iterations) csv << loss::csv_row(static_cast<long>(t), report) << "\n";
    if (config.sample_every > 0 && t % config.sample_every == 0) {
      fs::create_directories(out / "samples");
      char name[32];
      std::snprintf(name, sizeof(name), "iter_%06lld.png", static_cast<long long>(t));
      save_image(sample_grid(trainer, batch.night, reference), out / "samples" / name);
    }
    if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0 && t != config.iterations) {
      char name[32];
      std::snprintf(name, sizeof(name), "step_%06lld.dicow", static_cast<long long>(t));
      trainer.save_checkpoint(out / "checkpoints" / name);
    }
    if (progress) progress(t, report);
  }
  csv.flush();
  if (!csv) throw IoError((out / "losses.csv").string(), "write failed");
  result.checkpoint = out / "checkpoint.dicow";
  trainer.save_checkpoint(result.checkpoint);
  result.final_step = trainer.iteration();
  return result;
}

Image translate(const Image& night, Trainer& trainer) {
  if (night.channels != 3) throw DimensionError("channel", "translate expects an RGB image");
  if (night.width % 4 != 0) throw DimensionError("width", "image width must be divisible by 4");
  if (night.height % 4 != 0) throw DimensionError("height", "image height must be divisible by 4");
  return to_image(trainer.translate(to_tensor(night)));
}

}  // namespace dico
