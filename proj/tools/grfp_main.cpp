#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "grfp/checkpoint.hpp"
#include "grfp/eval.hpp"
#include "grfp/flowdata.hpp"
#include "grfp/gradsuite.hpp"
#include "grfp/tensor_io.hpp"
#include "grfp/train.hpp"

namespace fs = std::filesystem;
using namespace grfp;

namespace {

int cmd_generate(const std::string& out, std::uint64_t seed, int n_train, int n_val, int n_test,
                 SceneTemplate tmpl, bool overwrite) {
  const fs::path parent = fs::path(out).parent_path();
  if (!parent.empty() && !fs::exists(parent)) {
    std::cerr << "error: parent directory does not exist: " << parent.string() << '\n';
    return 1;
  }
  make_dataset(out, n_train, n_val, n_test, tmpl, seed, overwrite);
  std::cout << "dataset written to " << out << '\n'
            << "  canvas " << tmpl.height << 'x' << tmpl.width << ", classes " << tmpl.n_classes << ", clip frames "
            << tmpl.n_frames << (tmpl.post_frames ? " (+" + std::to_string(tmpl.post_frames) + " past label)" : "")
            << ", labels at frame " << tmpl.n_frames - 1 << '\n'
            << "  splits: train " << n_train << ", val " << n_val << ", test " << n_test << '\n'
            << "  image noise sigma " << tmpl.image_noise_sigma << ", illumination jitter " << tmpl.illum_jitter << '\n';
  return 0;
}

int cmd_train(const std::string& dataset, const std::string& out, TrainConfig cfg) {
  const Dataset ds = load_dataset(dataset);
  fs::create_directories(out);
  save_train_config(cfg, (fs::path(out) / "train_config.txt").string());

  std::ofstream pre_log((fs::path(out) / "pretrain_log.txt").string(), std::ios::trunc);
  auto backbone = BackboneParams<float>::make_default(ds.n_classes, cfg.seed ^ 0xBBull);
  backbone = pretrain_backbone(ds, std::move(backbone), cfg.pretrain_epochs, cfg.seed, cfg.pretrain_lr, &pre_log);

  std::ofstream metrics((fs::path(out) / "metrics.txt").string(), std::ios::trunc);
  const TrainResult res = train_grfp(ds, cfg, std::move(backbone), metrics);

  save_backbone(res.model.backbone, (fs::path(out) / "backbone").string());
  save_stgru(res.model.stgru, (fs::path(out) / "stgru").string());
  if (res.model.has_backward) save_stgru(res.model.stgru_backward, (fs::path(out) / "stgru_backward").string());
  std::cout << "checkpoint written to " << out << " (" << res.steps_run << " steps)\n";
  return 0;
}

GrfpModel load_model(const std::string& checkpoint) {
  GrfpModel model;
  model.backbone = load_backbone((fs::path(checkpoint) / "backbone").string());
  model.stgru = load_stgru((fs::path(checkpoint) / "stgru").string());
  if (fs::exists(fs::path(checkpoint) / "stgru_backward")) {
    model.stgru_backward = load_stgru((fs::path(checkpoint) / "stgru_backward").string());
    model.has_backward = true;
  }
  return model;
}

int cmd_eval(const std::string& dataset, const std::string& checkpoint, const std::string& out, int n_frames,
             bool backward, float flow_noise, std::uint64_t seed, const std::string& split) {
  const Dataset ds = load_dataset(dataset);
  const GrfpModel model = load_model(checkpoint);
  if (model.stgru.channels != ds.n_classes) {
    std::cerr << "error: checkpoint has " << model.stgru.channels << " classes but dataset has " << ds.n_classes << '\n';
    return 1;
  }
  fs::create_directories(out);
  InferenceConfig cfg;
  cfg.n_frames = n_frames;
  cfg.fuse_backward = backward;
  cfg.flow_noise_sigma = flow_noise;
  cfg.noise_seed = seed;

  std::vector<int> counts;
  for (int n = 1; n <= n_frames; ++n) counts.push_back(n);
  const auto ablation = frames_ablation(ds, split, model, cfg, counts);
  {
    std::ofstream f((fs::path(out) / "ablation.txt").string(), std::ios::trunc);
    f << "frames\tmIoU\n" << std::fixed << std::setprecision(4);
    for (const auto& [n, v] : ablation) f << n << '\t' << v << '\n';
  }

  InferenceConfig static_cfg = cfg;
  static_cfg.n_frames = 1;
  static_cfg.fuse_backward = false;
  const IouReport stat = dataset_miou(ds, split, model, static_cfg);
  const IouReport grfp = dataset_miou(ds, split, model, cfg);
  {
    std::ofstream f((fs::path(out) / "per_class_iou.txt").string(), std::ios::trunc);
    f << "class\tstatic\tGRFP(" << n_frames << ")\n" << std::fixed << std::setprecision(4);
    for (int c = 0; c < ds.n_classes; ++c) {
      if (!stat.present[c] && !grfp.present[c]) continue;
      f << c << '\t' << stat.per_class[c] << '\t' << grfp.per_class[c] << '\n';
    }
    f << "Average\t" << stat.mean << '\t' << grfp.mean << '\n';
  }

  const auto cons = dataset_consistency(ds, split, model, cfg);
  {
    std::ofstream f((fs::path(out) / "consistency.txt").string(), std::ios::trunc);
    f << "clip\tstatic\tGRFP\n" << std::fixed << std::setprecision(4);
    for (std::size_t k = 0; k < cons.clip_ids.size(); ++k)
      f << cons.clip_ids[k] << '\t' << cons.baseline[k] << '\t' << cons.grfp[k] << '\n';
    f << "Average\t" << cons.baseline_avg << '\t' << cons.grfp_avg << '\n';
  }

  // qualitative renders for the first few clips
  int rendered = 0;
  for (const auto* info : ds.split(split)) {
    if (rendered >= 3) break;
    const VideoSample clip = load_clip(*info);
    save_label_overlay(argmax_labels(grfp_infer(clip, model, cfg, info->seed)),
                       (fs::path(out) / ("overlay_" + info->id + ".ppm")).string());
    save_label_overlay(clip.labels, (fs::path(out) / ("truth_" + info->id + ".ppm")).string());
    save_ppm(clip.frames[clip.label_index], (fs::path(out) / ("image_" + info->id + ".ppm")).string());
    ++rendered;
  }
  std::cout << "reports written to " << out << " (static mIoU " << std::fixed << std::setprecision(4) << stat.mean
            << ", GRFP mIoU " << grfp.mean << ")\n";
  return 0;
}

int cmd_gradcheck(double threshold) {
  const auto results = run_gradcheck_suite();
  bool ok = true;
  for (const auto& [name, err] : results) {
    const bool pass = err <= threshold;
    ok = ok && pass;
    std::cout << name << "\tmax_rel_err=" << std::scientific << std::setprecision(3) << err << '\t'
              << (pass ? "PASS" : "FAIL") << '\n';
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated recurrent flow propagation for semantic video segmentation"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic video dataset");
  std::string gen_out;
  std::uint64_t gen_seed = 1;
  int n_train = 20, n_val = 5, n_test = 5;
  bool overwrite = false;
  SceneTemplate tmpl;
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--train", n_train, "Training clips");
  gen->add_option("--val", n_val, "Validation clips");
  gen->add_option("--test", n_test, "Test clips");
  gen->add_option("--size", tmpl.height, "Canvas size (square)");
  gen->add_option("--classes", tmpl.n_classes, "Number of classes incl. background");
  gen->add_option("--clip-frames", tmpl.n_frames, "Frames up to and including the labeled frame");
  gen->add_option("--post-frames", tmpl.post_frames, "Extra frames past the labeled frame");
  gen->add_option("--image-noise", tmpl.image_noise_sigma, "Per-frame pixel noise sigma");
  gen->add_option("--illum-jitter", tmpl.illum_jitter, "Per-frame brightness jitter");
  gen->add_option("--max-speed", tmpl.max_speed, "Max object speed, px/frame");
  gen->add_flag("--overwrite", overwrite, "Replace an existing dataset");

  // train
  auto* tr = app.add_subcommand("train", "Pretrain the backbone and train the recurrent model");
  std::string tr_dataset, tr_out, tr_config;
  TrainConfig tcfg;
  bool no_refine = false;
  tr->add_option("--dataset", tr_dataset, "Dataset directory")->required();
  tr->add_option("--out", tr_out, "Checkpoint/log output directory")->required();
  tr->add_option("--config", tr_config, "Load a train_config file first");
  tr->add_option("--seed", tcfg.seed, "Training seed");
  tr->add_option("--frames", tcfg.n_frames, "Chain length (frames)");
  tr->add_option("--truncation", tcfg.backbone_truncation_depth, "STGRU steps nearest the loss that reach the backbone");
  tr->add_flag("--backward", tcfg.train_backward, "Also train a backward chain and fuse");
  tr->add_option("--flow-noise", tcfg.flow_noise_sigma, "Flow displacement noise sigma during training/validation");
  tr->add_option("--steps", tcfg.steps, "GRFP training steps");
  tr->add_option("--pretrain-epochs", tcfg.pretrain_epochs, "Backbone pretraining epochs");
  tr->add_option("--stgru-lr", tcfg.stgru_lr, "Adam learning rate for the recurrent parameters");
  tr->add_option("--backbone-lr", tcfg.backbone_lr, "SGD-momentum learning rate for backbone refinement");
  tr->add_option("--pretrain-lr", tcfg.pretrain_lr, "Adam learning rate for backbone pretraining");
  tr->add_option("--lambda-init", tcfg.lambda_init, "Initial propagation scale lambda");
  tr->add_option("--val-interval", tcfg.val_interval, "Steps between validation mIoU evaluations");
  tr->add_flag("--no-refine-backbone", no_refine, "Freeze the backbone during GRFP training");

  // eval
  auto* ev = app.add_subcommand("eval", "Emit ablation, per-class IoU and consistency tables");
  std::string ev_dataset, ev_checkpoint, ev_out, ev_split = "val";
  int ev_frames = 5;
  bool ev_backward = false;
  float ev_noise = 0.0f;
  std::uint64_t ev_seed = 1;
  ev->add_option("--dataset", ev_dataset, "Dataset directory")->required();
  ev->add_option("--checkpoint", ev_checkpoint, "Checkpoint directory (from train)")->required();
  ev->add_option("--out", ev_out, "Report output directory")->required();
  ev->add_option("--frames", ev_frames, "Chain length for inference");
  ev->add_flag("--backward", ev_backward, "Fuse forward and backward chains");
  ev->add_option("--flow-noise", ev_noise, "Flow displacement noise sigma");
  ev->add_option("--seed", ev_seed, "Noise seed");
  ev->add_option("--split", ev_split, "Dataset split to evaluate");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference verification of all gradients");
  double threshold = 1e-4;
  gc->add_option("--threshold", threshold, "Max allowed relative error");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      tmpl.width = tmpl.height;
      return cmd_generate(gen_out, gen_seed, n_train, n_val, n_test, tmpl, overwrite);
    }
    if (tr->parsed()) {
      if (!tr_config.empty()) {
        const TrainConfig parsed = tcfg;  // values after CLI parsing
        tcfg = load_train_config(tr_config);
        // explicit flags win over the config file
        if (tr->count("--seed")) tcfg.seed = parsed.seed;
        if (tr->count("--frames")) tcfg.n_frames = parsed.n_frames;
        if (tr->count("--truncation")) tcfg.backbone_truncation_depth = parsed.backbone_truncation_depth;
        if (tr->count("--backward")) tcfg.train_backward = parsed.train_backward;
        if (tr->count("--flow-noise")) tcfg.flow_noise_sigma = parsed.flow_noise_sigma;
        if (tr->count("--steps")) tcfg.steps = parsed.steps;
        if (tr->count("--pretrain-epochs")) tcfg.pretrain_epochs = parsed.pretrain_epochs;
        if (tr->count("--stgru-lr")) tcfg.stgru_lr = parsed.stgru_lr;
        if (tr->count("--backbone-lr")) tcfg.backbone_lr = parsed.backbone_lr;
        if (tr->count("--pretrain-lr")) tcfg.pretrain_lr = parsed.pretrain_lr;
        if (tr->count("--lambda-init")) tcfg.lambda_init = parsed.lambda_init;
        if (tr->count("--val-interval")) tcfg.val_interval = parsed.val_interval;
      }
      if (no_refine) tcfg.refine_backbone = false;
      return cmd_train(tr_dataset, tr_out, tcfg);
    }
    if (ev->parsed()) return cmd_eval(ev_dataset, ev_checkpoint, ev_out, ev_frames, ev_backward, ev_noise, ev_seed, ev_split);
    if (gc->parsed()) return cmd_gradcheck(threshold);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
