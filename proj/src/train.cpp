#include "grfp/train.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace grfp {

namespace {

std::vector<const Tensor<float>*> grads_for(Tape<float>& tape, const std::vector<Tape<float>::Id>& ids,
                                            std::vector<Tensor<float>>& storage) {
  storage.clear();
  for (auto id : ids) storage.push_back(tape.grad(id));
  std::vector<const Tensor<float>*> out;
  for (auto& g : storage) out.push_back(&g);
  return out;
}

std::vector<Tape<float>::Id> stgru_ids(const StgruVars<float>& v) {
  return {v.w_ir, v.b_r, v.w_xh, v.w_hh, v.w_xz, v.w_hz, v.b_z, v.log_lambda};
}

}  // namespace

void save_train_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open for write: " + path);
  out << "n_frames=" << cfg.n_frames << '\n'
      << "backbone_truncation_depth=" << cfg.backbone_truncation_depth << '\n'
      << "train_backward=" << (cfg.train_backward ? 1 : 0) << '\n'
      << "refine_backbone=" << (cfg.refine_backbone ? 1 : 0) << '\n'
      << "seed=" << cfg.seed << '\n'
      << "steps=" << cfg.steps << '\n'
      << "pretrain_epochs=" << cfg.pretrain_epochs << '\n'
      << "stgru_lr=" << cfg.stgru_lr << '\n'
      << "backbone_lr=" << cfg.backbone_lr << '\n'
      << "pretrain_lr=" << cfg.pretrain_lr << '\n'
      << "flow_noise_sigma=" << cfg.flow_noise_sigma << '\n'
      << "lambda_init=" << cfg.lambda_init << '\n'
      << "conf_channels=" << cfg.conf_channels << '\n'
      << "val_interval=" << cfg.val_interval << '\n';
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path);
  TrainConfig cfg;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "n_frames") cfg.n_frames = std::stoi(val);
    else if (key == "backbone_truncation_depth") cfg.backbone_truncation_depth = std::stoi(val);
    else if (key == "train_backward") cfg.train_backward = std::stoi(val) != 0;
    else if (key == "refine_backbone") cfg.refine_backbone = std::stoi(val) != 0;
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "steps") cfg.steps = std::stoi(val);
    else if (key == "pretrain_epochs") cfg.pretrain_epochs = std::stoi(val);
    else if (key == "stgru_lr") cfg.stgru_lr = std::stof(val);
    else if (key == "backbone_lr") cfg.backbone_lr = std::stof(val);
    else if (key == "pretrain_lr") cfg.pretrain_lr = std::stof(val);
    else if (key == "flow_noise_sigma") cfg.flow_noise_sigma = std::stof(val);
    else if (key == "lambda_init") cfg.lambda_init = std::stof(val);
    else if (key == "conf_channels") cfg.conf_channels = std::stoi(val);
    else if (key == "val_interval") cfg.val_interval = std::stoi(val);
    else throw FormatError(path + ": unknown config key '" + key + "'");
  }
  return cfg;
}

BackboneParams<float> pretrain_backbone(const Dataset& ds, BackboneParams<float> init, int epochs,
                                        std::uint64_t seed, float lr, std::ostream* log) {
  if (epochs <= 0) return init;
  const auto clips = ds.split("train");
  require(!clips.empty(), "pretrain_backbone: train split is empty");
  std::vector<std::pair<Tensor<float>, LabelMap>> samples;
  for (const auto* c : clips) {
    VideoSample clip = load_clip(*c);
    samples.emplace_back(clip.frames[clip.label_index], clip.labels);
  }
  Adam<float> adam({lr, 0.95f, 0.99f, 1e-8f});
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  int step = 0;
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      Tape<float> tape;
      auto vars = register_backbone(tape, init);
      auto loss = tape.nll_loss(unary_belief_on_tape(tape, vars, tape.leaf(samples[idx].first)), samples[idx].second);
      tape.backward(loss);
      std::vector<Tape<float>::Id> ids;
      for (const auto& l : vars.layers) {
        ids.push_back(l.w);
        ids.push_back(l.b);
      }
      std::vector<Tensor<float>> storage;
      adam.step(init.tensors(), grads_for(tape, ids, storage));
      if (log) (*log) << step << '\t' << tape.val(loss).data[0] << '\n';
      ++step;
    }
  }
  return init;
}

TrainResult train_grfp(const Dataset& ds, const TrainConfig& cfg, BackboneParams<float> backbone,
                       std::ostream& metrics) {
  require(cfg.n_frames >= 1, "train_grfp: n_frames must be >= 1");
  require(cfg.backbone_truncation_depth >= 1 && cfg.backbone_truncation_depth <= cfg.n_frames,
          "train_grfp: backbone_truncation_depth must be in [1, n_frames]");
  const auto clip_infos = ds.split("train");
  require(!clip_infos.empty(), "train_grfp: train split is empty");

  std::vector<VideoSample> clips;
  for (const auto* c : clip_infos) clips.push_back(load_clip(*c));

  TrainResult res;
  res.model.backbone = std::move(backbone);
  res.model.stgru = StgruParams<float>::init_default(ds.n_classes, cfg.conf_channels, cfg.lambda_init, cfg.seed ^ 0xC0FFEEull);
  res.model.stgru_backward = res.model.stgru;  // alpha starts from theta
  res.model.has_backward = cfg.train_backward;

  Adam<float> adam_theta({cfg.stgru_lr, 0.95f, 0.99f, 1e-8f});
  Adam<float> adam_alpha({cfg.stgru_lr, 0.95f, 0.99f, 1e-8f});
  SgdMomentum<float> sgd({cfg.backbone_lr, 0.95f});

  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 noise_rng(cfg.seed ^ 0xF10E5ull);

  InferenceConfig val_cfg;
  val_cfg.n_frames = cfg.n_frames;
  val_cfg.flow_noise_sigma = cfg.flow_noise_sigma;
  val_cfg.noise_seed = cfg.seed;

  for (int step = 0; step < cfg.steps; ++step) {
    const VideoSample& clip = clips[rng() % clips.size()];
    if (static_cast<int>(clip.frames.size()) < cfg.n_frames) {
      std::cerr << "train_grfp: skipping clip shorter than " << cfg.n_frames << " frames\n";
      continue;
    }
    const int label = clip.label_index;
    const int start = std::max(0, label - (cfg.n_frames - 1));

    std::vector<Tensor<float>> flows = clip.flows;
    if (cfg.flow_noise_sigma > 0)
      for (auto& f : flows) add_flow_noise(f, cfg.flow_noise_sigma, noise_rng);

    Tape<float> tape;
    const auto theta = register_stgru(tape, res.model.stgru);
    BackboneVars<float> bvars;
    if (cfg.refine_backbone) bvars = register_backbone(tape, res.model.backbone);

    // Only the unaries feeding the truncation window backpropagate into the
    // backbone; earlier unaries enter as constants.
    auto unary_id = [&](int t, int window_start, int window_end) -> Tape<float>::Id {
      const bool on_tape = cfg.refine_backbone && t >= window_end - (cfg.backbone_truncation_depth - 1) &&
                           t <= window_end && window_start <= t;
      if (on_tape) return unary_belief_on_tape(tape, bvars, tape.leaf(clip.frames[t]));
      return tape.leaf(unary_belief(clip.frames[t], res.model.backbone));
    };

    std::vector<Tape<float>::Id> frame_ids, flow_ids, unary_ids;
    for (int t = start; t <= label; ++t) {
      frame_ids.push_back(tape.leaf(clip.frames[t]));
      unary_ids.push_back(unary_id(t, start, label));
      if (t > start) flow_ids.push_back(tape.leaf(flows[t - 1]));
    }
    auto h = unroll(tape, theta, frame_ids, flow_ids, unary_ids);

    StgruVars<float> alpha{};
    bool used_alpha = false;
    if (cfg.train_backward && label + 1 < static_cast<int>(clip.frames.size())) {
      std::vector<Tensor<float>> rflows = clip.rflows;
      if (cfg.flow_noise_sigma > 0)
        for (auto& f : rflows) add_flow_noise(f, cfg.flow_noise_sigma, noise_rng);
      alpha = register_stgru(tape, res.model.stgru_backward);
      used_alpha = true;
      const int last = std::min(static_cast<int>(clip.frames.size()) - 1, label + (cfg.n_frames - 1));
      std::vector<Tape<float>::Id> bframes, bflows, bunaries;
      for (int t = last; t >= label; --t) {
        bframes.push_back(tape.leaf(clip.frames[t]));
        bunaries.push_back(tape.leaf(unary_belief(clip.frames[t], res.model.backbone)));
        if (t < last) bflows.push_back(tape.leaf(rflows[t]));
      }
      h = fuse_bidirectional(tape, h, unroll(tape, alpha, bframes, bflows, bunaries));
    }

    const auto loss = segmentation_loss(tape, h, clip.labels);
    tape.backward(loss);

    std::vector<Tensor<float>> gstore;
    adam_theta.step(res.model.stgru.tensors(), grads_for(tape, stgru_ids(theta), gstore));
    if (used_alpha)
      adam_alpha.step(res.model.stgru_backward.tensors(), grads_for(tape, stgru_ids(alpha), gstore));
    if (cfg.refine_backbone) {
      std::vector<Tape<float>::Id> ids;
      for (const auto& l : bvars.layers) {
        ids.push_back(l.w);
        ids.push_back(l.b);
      }
      sgd.step(res.model.backbone.tensors(), grads_for(tape, ids, gstore));
    }

    metrics << step << '\t' << tape.val(loss).data[0];
    if (cfg.val_interval > 0 && (step + 1) % cfg.val_interval == 0)
      metrics << '\t' << dataset_miou(ds, "val", res.model, val_cfg).mean;
    metrics << '\n';
    ++res.steps_run;
  }
  return res;
}

}  // namespace grfp
