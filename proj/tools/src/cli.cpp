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

#include "dico_cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "CLI11.hpp"
#include "dico/color_invariants.hpp"
#include "dico/data.hpp"
#include "dico/disentangle.hpp"
#include "dico/error.hpp"
#include "dico/eval.hpp"
#include "dico/feature_extractor.hpp"
#include "dico/image.hpp"
#include "dico/pipeline.hpp"

namespace dico::cli {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError(path.string(), "cannot open for writing");
  f << text;
}

Image upsample_gray(const Tensor& plane, int height, int width) {
  const Shape& s = plane.shape();
  const auto v = plane.data();
  Image out(width, height, 1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.at(y, x) = v[(y * s.h / height) * s.w + x * s.w / width];
  return out;
}

struct InvariantsArgs {
  std::string input, out_dir;
  double sigma = color::kDefaultSigma;
  double epsilon = color::kDefaultEpsilon;
};

void do_invariants(const InvariantsArgs& a, std::ostream& out) {
  const Image im = load_image(a.input);
  const auto stack = color::invariants_of(to_tensor(im), a.sigma, a.epsilon);
  ensure_dir(a.out_dir);
  for (std::size_t k = 0; k < color::kInvariantNames.size(); ++k) {
    const fs::path p = fs::path(a.out_dir) / (std::string(color::kInvariantNames[k]) + ".png");
    save_image(normalized_plane(stack.phi, 0, static_cast<std::int64_t>(k)), p);
    out << p.string() << "\n";
  }
}

struct DisentangleArgs {
  std::string input, reference, out_dir, stage = "stage4";
  std::uint64_t seed = 0;
  float gamma = 10.0f, center = 0.5f, threshold = 0.5f;
};

void do_disentangle(const DisentangleArgs& a, std::ostream& out) {
  const Image im = load_image(a.input);
  const Image ref = load_image(a.reference);
  if (im.width != ref.width) throw DimensionError("width", "input and reference widths differ");
  if (im.height != ref.height) throw DimensionError("height", "input and reference heights differ");
  const FeatureExtractor ex(PyramidSpec::defaults(a.seed));
  std::vector<std::string> stages;
  if (a.stage == "all") {
    for (const auto& s : ex.spec().stages) stages.push_back(s.name);
  } else {
    stages.push_back(a.stage);
  }
  NoGradScope ng;
  const FeaturePyramid p = ex.extract(to_tensor(im), true);
  const FeaturePyramid r = ex.extract(to_tensor(ref), true);
  for (const auto& st : stages) {
    if (!p.activations.count(st)) throw ConfigError("unknown stage '" + st + "'");
  }
  const MaskSet masks = compute_masks(p, r, stages, {a.gamma, a.center, a.threshold}, false);
  ensure_dir(a.out_dir);
  for (const auto& st : stages) {
    const Tensor& m = masks.mask(st);
    Tensor sim = masks.scores(st).scores.clone();
    for (float& v : sim.mutable_data()) v = 0.5f * (v + 1.0f);
    Tensor fg = binarize(m, a.threshold);
    for (float& v : fg.mutable_data()) v = 1.0f - v;
    const fs::path dir = a.out_dir;
    save_image(upsample_gray(m, im.height, im.width), dir / ("mask_" + st + ".png"));
    save_image(upsample_gray(sim, im.height, im.width), dir / ("similarity_" + st + ".png"));
    save_image(upsample_gray(fg, im.height, im.width), dir / ("foreground_" + st + ".png"));
    out << st << ": mean mask " << std::accumulate(m.data().begin(), m.data().end(), 0.0) / m.numel() << "\n";
  }
}

struct SceneArgs {
  std::string spec, out_dir;
  std::uint64_t seed = 0;
};

void do_synth_scene(const SceneArgs& a, bool seed_given, std::ostream& out) {
  SyntheticSceneSpec spec = a.spec.empty() ? SyntheticSceneSpec{} : SyntheticSceneSpec::load(a.spec);
  if (seed_given || a.spec.empty()) spec.seed = a.seed;
  const SyntheticScene scene = generate_synthetic_scene(spec);
  write_synthetic_scene(scene, a.out_dir);
  out << "wrote " << scene.night.size() << " night and " << scene.day.size() << " day frames to " << a.out_dir
      << "\n";
}

struct TrainArgs {
  std::string config, dataset, out_dir;
  std::uint64_t seed = 0;
  int iterations = 0;
  bool no_lci = false, no_fore = false, no_back = false;
  bool quiet = false;
};

void do_train(const TrainArgs& a, bool seed_given, std::ostream& out) {
  TrainConfig c = TrainConfig::load(a.config);
  if (seed_given) c.seed = a.seed;
  if (a.iterations > 0) c.iterations = a.iterations;
  if (!a.dataset.empty()) c.dataset_root = a.dataset;
  if (!a.out_dir.empty()) c.output_dir = a.out_dir;
  if (a.no_lci) c.use_lci = false;
  if (a.no_fore) c.use_l_fore = false;
  if (a.no_back) c.use_l_back = false;
  const auto result = train(c, [&](std::int64_t t, const loss::Report& r) {
    if (!a.quiet && (t % 20 == 0 || t == 1)) out << loss::csv_row(static_cast<long>(t), r) << "\n";
  });
  out << "checkpoint " << result.checkpoint.string() << " (step " << result.final_step << ")\n";
}

struct TranslateArgs {
  std::string checkpoint, input, output;
};

void do_translate(const TranslateArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  TrainConfig c = ck.config;
  c.resume_from.clear();
  Trainer trainer(c);
  trainer.load_checkpoint(ck, a.checkpoint);
  const Image night = load_image(a.input);
  const fs::path dst = a.output;
  if (dst.has_parent_path()) ensure_dir(dst.parent_path());
  save_image(translate(night, trainer), dst);
}

struct EvalArgs {
  std::string checkpoint, scene_dir, report;
};

void do_eval(const EvalArgs& a, std::ostream& out) {
  const eval::Report r = eval::evaluate(a.checkpoint, a.scene_dir);
  const std::string text = r.to_json();
  if (!a.report.empty()) {
    const fs::path p = a.report;
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    write_file(p, text);
  }
  out << text;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Night-to-day translation with disentangled contrastive learning", "dico"};
  app.require_subcommand(1);

  InvariantsArgs inv;
  auto* c_inv = app.add_subcommand("invariants", "Write the E, W, C, H, N colour-invariant maps of an image");
  c_inv->add_option("--input", inv.input, "Input RGB image")->required();
  c_inv->add_option("--out-dir", inv.out_dir, "Output directory")->required();
  c_inv->add_option("--sigma", inv.sigma, "Gaussian derivative scale")->capture_default_str();
  c_inv->add_option("--epsilon", inv.epsilon, "Denominator floor")->capture_default_str();
  std::uint64_t inv_seed = 0;
  c_inv->add_option("--seed", inv_seed, "Random seed (unused)")->capture_default_str();

  DisentangleArgs dis;
  auto* c_dis = app.add_subcommand("disentangle", "Background/foreground masks of an image against a reference");
  c_dis->add_option("--input", dis.input, "Input RGB image")->required();
  c_dis->add_option("--reference", dis.reference, "Background reference image")->required();
  c_dis->add_option("--out-dir", dis.out_dir, "Output directory")->required();
  c_dis->add_option("--stage", dis.stage, "Feature stage (stage1..stage4 or all)")->capture_default_str();
  c_dis->add_option("--seed", dis.seed, "Extractor weight seed")->capture_default_str();
  c_dis->add_option("--gamma", dis.gamma, "Mask sharpness")->capture_default_str();
  c_dis->add_option("--center", dis.center, "Mask similarity centre")->capture_default_str();
  c_dis->add_option("--threshold", dis.threshold, "Binarisation threshold")->capture_default_str();

  std::string bg_scene, bg_out;
  auto* c_bg = app.add_subcommand("synth-background", "Average the day frames of a scene into a background");
  c_bg->add_option("--scene-dir", bg_scene, "Scene directory containing day/")->required();
  c_bg->add_option("--out", bg_out, "Output image")->required();
  std::uint64_t bg_seed = 0;
  c_bg->add_option("--seed", bg_seed, "Random seed (unused)")->capture_default_str();

  SceneArgs sc;
  auto* c_sc = app.add_subcommand("synth-scene", "Generate a synthetic surveillance scene");
  c_sc->add_option("--spec", sc.spec, "Scene spec JSON (defaults when omitted)");
  c_sc->add_option("--out-dir", sc.out_dir, "Output directory")->required();
  auto* sc_seed = c_sc->add_option("--seed", sc.seed, "Scene seed (overrides the spec)")->capture_default_str();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train on a scene directory");
  c_tr->add_option("--config", tr.config, "Training config JSON")->required();
  auto* tr_seed = c_tr->add_option("--seed", tr.seed, "Override the config seed")->capture_default_str();
  c_tr->add_option("--iterations", tr.iterations, "Override the iteration count");
  c_tr->add_option("--dataset", tr.dataset, "Override the dataset root");
  c_tr->add_option("--out-dir", tr.out_dir, "Override the output directory");
  c_tr->add_flag("--no-lci", tr.no_lci, "Disable the learnable colour invariant");
  c_tr->add_flag("--no-fore", tr.no_fore, "Disable the foreground contrastive loss");
  c_tr->add_flag("--no-back", tr.no_back, "Disable the background loss");
  c_tr->add_flag("--quiet", tr.quiet, "Suppress progress lines");

  TranslateArgs tl;
  auto* c_tl = app.add_subcommand("translate", "Translate a night image with a checkpoint");
  c_tl->add_option("--checkpoint", tl.checkpoint, "Checkpoint weight file")->required();
  c_tl->add_option("--input", tl.input, "Night image")->required();
  c_tl->add_option("--out", tl.output, "Output image")->required();
  std::uint64_t tl_seed = 0;
  c_tl->add_option("--seed", tl_seed, "Random seed (unused)")->capture_default_str();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Evaluate a checkpoint on a scene");
  c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint weight file")->required();
  c_ev->add_option("--scene-dir", ev.scene_dir, "Scene directory")->required();
  c_ev->add_option("--report", ev.report, "JSON report path");
  std::uint64_t ev_seed = 0;
  c_ev->add_option("--seed", ev_seed, "Random seed (unused)")->capture_default_str();

  std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kSuccess;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (c_inv->parsed()) {
      do_invariants(inv, out);
    } else if (c_dis->parsed()) {
      do_disentangle(dis, out);
    } else if (c_bg->parsed()) {
      const SceneDataset ds = load_scene(bg_scene, true);
      const fs::path dst = bg_out;
      if (dst.has_parent_path()) ensure_dir(dst.parent_path());
      save_image(synth_background(ds.day), dst);
    } else if (c_sc->parsed()) {
      do_synth_scene(sc, sc_seed->count() > 0, out);
    } else if (c_tr->parsed()) {
      do_train(tr, tr_seed->count() > 0, out);
    } else if (c_tl->parsed()) {
      do_translate(tl);
    } else if (c_ev->parsed()) {
      do_eval(ev, out);
    }
  } catch (const std::exception& e) {
    err << "dico: " << e.what() << "\n";
    return kRuntime;
  }
  return kSuccess;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace dico::cli
