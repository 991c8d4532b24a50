#pragma once

#include <string>
#include <vector>

#include "grfp/backbone.hpp"
#include "grfp/flowdata.hpp"
#include "grfp/stgru.hpp"

namespace grfp {

// Aggregated C x C counts; entry (truth, pred). Ignore pixels are excluded.
struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<long long> counts;

  explicit ConfusionMatrix(int c) : n_classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}

  long long& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth) * n_classes + pred]; }
  long long at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * n_classes + pred]; }

  void add(const LabelMap& truth, const LabelMap& pred);
  long long total() const;
};

struct IouReport {
  std::vector<double> per_class;
  std::vector<bool> present;  // class appears in prediction or truth
  double mean = 0;            // over present classes only
};

IouReport iou_from_confusion(const ConfusionMatrix& cm);
IouReport miou(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& truths, int n_classes);

// A point tracked from frame 0 by chaining (inverted) flow.
struct Trajectory {
  enum class Term { End, Occluded, OutOfImage };
  std::vector<std::pair<float, float>> pos;  // (x, y), one per frame while alive
  Term term = Term::End;
};

// Seeds a regular grid at frame 0 and advances points frame-to-frame by
// inverting the backward flow (bilinear flow interpolation). A trajectory
// ends at an occlusion-mask hit, an inversion-consistency failure, or image
// exit. flows[k] maps frame k+1 back to frame k.
std::vector<Trajectory> build_trajectories(const std::vector<Tensor<float>>& flows,
                                           const std::vector<Tensor<float>>& occl, int grid_stride);

// Fraction of trajectories of length >= 2 whose nearest-pixel predicted label
// is identical over their whole life. Throws on an empty trajectory set.
double temporal_consistency(const std::vector<LabelMap>& pred_seq, const std::vector<Trajectory>& trajs);

// ---- GRFP inference ------------------------------------------------------

struct GrfpModel {
  BackboneParams<float> backbone;
  StgruParams<float> stgru;           // forward-chain parameters (theta)
  StgruParams<float> stgru_backward;  // backward-chain parameters (alpha)
  bool has_backward = false;          // when false, alpha = theta
};

struct InferenceConfig {
  int n_frames = 5;
  bool fuse_backward = false;
  float flow_noise_sigma = 0.0f;
  std::uint64_t noise_seed = 0;  // combined with the per-clip seed
};

LabelMap argmax_labels(const Tensor<float>& probs);

// Belief at the labeled frame: forward chain over the n_frames window ending
// there, optionally fused with the backward chain over the frames past it.
Tensor<float> grfp_infer(const VideoSample& clip, const GrfpModel& model, const InferenceConfig& cfg,
                         std::uint64_t clip_seed);

// Per-frame predictions over the whole clip (sliding forward window), for the
// temporal-consistency protocol.
std::vector<LabelMap> grfp_predict_sequence(const VideoSample& clip, const GrfpModel& model,
                                            const InferenceConfig& cfg, std::uint64_t clip_seed);

// Static (per-frame) baseline prediction.
LabelMap static_predict(const Tensor<float>& frame, const BackboneParams<float>& backbone);

// mIoU at the labeled frames of one split. n_frames = 1 is the static
// baseline path through the same code.
IouReport dataset_miou(const Dataset& ds, const std::string& split, const GrfpModel& model,
                       const InferenceConfig& cfg);

// Average temporal consistency over a split, GRFP vs static baseline.
struct ConsistencyReport {
  std::vector<std::string> clip_ids;
  std::vector<double> grfp, baseline;
  double grfp_avg = 0, baseline_avg = 0;
};
ConsistencyReport dataset_consistency(const Dataset& ds, const std::string& split, const GrfpModel& model,
                                      const InferenceConfig& cfg, int grid_stride = 4);

// mIoU for each chain length in `frame_counts`, same parameters throughout.
std::vector<std::pair<int, double>> frames_ablation(const Dataset& ds, const std::string& split,
                                                    const GrfpModel& model, const InferenceConfig& cfg,
                                                    const std::vector<int>& frame_counts);

}  // namespace grfp
