#pragma once

#include <iosfwd>
#include <string>

#include "grfp/eval.hpp"
#include "grfp/optim.hpp"

namespace grfp {

struct TrainConfig {
  int n_frames = 5;
  int backbone_truncation_depth = 2;  // STGRU steps nearest the loss that reach the backbone
  bool train_backward = false;
  bool refine_backbone = true;
  std::uint64_t seed = 1;
  int steps = 400;           // GRFP training steps (one clip each)
  int pretrain_epochs = 60;  // backbone pretraining epochs
  float stgru_lr = 2e-5f;
  float backbone_lr = 1e-7f;
  float pretrain_lr = 1e-3f;
  float flow_noise_sigma = 0.0f;
  float lambda_init = 2.0f;
  int conf_channels = 1;
  int val_interval = 100;
};

void save_train_config(const TrainConfig& cfg, const std::string& path);
TrainConfig load_train_config(const std::string& path);

// Per-frame supervised training of the backbone on the labeled frames of the
// train split (Adam). A zero-epoch call returns `init` unchanged. Metrics
// lines "step<TAB>loss" go to `log` when given.
BackboneParams<float> pretrain_backbone(const Dataset& ds, BackboneParams<float> init, int epochs,
                                        std::uint64_t seed, float lr, std::ostream* log = nullptr);

struct TrainResult {
  GrfpModel model;
  int steps_run = 0;
};

// GRFP training: one clip per step, forward chain (optionally plus a
// backward chain, fused) into the loss at the labeled frame. STGRU
// parameters receive the full-chain gradient (Adam); backbone parameters
// receive gradient only through the truncation window (SGD with momentum).
// Metrics lines "step<TAB>loss[<TAB>val_miou]" go to `metrics`.
TrainResult train_grfp(const Dataset& ds, const TrainConfig& cfg, BackboneParams<float> backbone,
                       std::ostream& metrics);

}  // namespace grfp
