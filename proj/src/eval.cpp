#include "grfp/eval.hpp"

#include <algorithm>
#include <cmath>

#include "grfp/parallel.hpp"

namespace grfp {

void ConfusionMatrix::add(const LabelMap& truth, const LabelMap& pred) {
  require(truth.h == pred.h && truth.w == pred.w, "confusion: prediction/truth size mismatch");
  for (std::size_t i = 0; i < truth.ids.size(); ++i) {
    const int t = truth.ids[i];
    if (t == LabelMap::kIgnore) continue;
    require(t >= 0 && t < n_classes, "confusion: true label " + std::to_string(t) + " out of range");
    const int p = pred.ids[i];
    require(p >= 0 && p < n_classes, "confusion: predicted label " + std::to_string(p) + " out of range");
    ++at(t, p);
  }
}

long long ConfusionMatrix::total() const {
  long long s = 0;
  for (long long v : counts) s += v;
  return s;
}

IouReport iou_from_confusion(const ConfusionMatrix& cm) {
  IouReport r;
  r.per_class.assign(cm.n_classes, 0.0);
  r.present.assign(cm.n_classes, false);
  double sum = 0;
  int n_present = 0;
  for (int c = 0; c < cm.n_classes; ++c) {
    long long tp = cm.at(c, c), fp = 0, fn = 0;
    for (int o = 0; o < cm.n_classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    if (tp + fp + fn == 0) continue;  // absent from both prediction and truth
    r.present[c] = true;
    r.per_class[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    sum += r.per_class[c];
    ++n_present;
  }
  r.mean = n_present ? sum / n_present : 0.0;
  return r;
}

IouReport miou(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& truths, int n_classes) {
  require(preds.size() == truths.size(), "miou: prediction/truth count mismatch");
  ConfusionMatrix cm(n_classes);
  for (std::size_t k = 0; k < preds.size(); ++k) cm.add(truths[k], preds[k]);
  return iou_from_confusion(cm);
}

namespace {

// Bilinear sample of one flow channel at continuous (y, x), edge-clamped.
float sample_flow(const Tensor<float>& f, float y, float x, int ch) {
  const int h = f.shape[0], w = f.shape[1];
  y = std::min(static_cast<float>(h - 1), std::max(0.0f, y));
  x = std::min(static_cast<float>(w - 1), std::max(0.0f, x));
  const int y0 = std::min(h - 2 >= 0 ? h - 2 : 0, static_cast<int>(y));
  const int x0 = std::min(w - 2 >= 0 ? w - 2 : 0, static_cast<int>(x));
  const float fy = y - y0, fx = x - x0;
  const int y1 = std::min(h - 1, y0 + 1), x1 = std::min(w - 1, x0 + 1);
  return (1 - fy) * ((1 - fx) * f.at(y0, x0, ch) + fx * f.at(y0, x1, ch)) +
         fy * ((1 - fx) * f.at(y1, x0, ch) + fx * f.at(y1, x1, ch));
}

}  // namespace

std::vector<Trajectory> build_trajectories(const std::vector<Tensor<float>>& flows,
                                           const std::vector<Tensor<float>>& occl, int grid_stride) {
  require(grid_stride >= 1, "build_trajectories: grid stride must be >= 1");
  require(!flows.empty(), "build_trajectories: need at least one flow field");
  const int h = flows[0].shape[0], w = flows[0].shape[1];
  std::vector<Trajectory> out;
  for (int i = grid_stride / 2; i < h; i += grid_stride)
    for (int j = grid_stride / 2; j < w; j += grid_stride) {
      Trajectory tr;
      float x = static_cast<float>(j), y = static_cast<float>(i);
      tr.pos.emplace_back(x, y);
      for (std::size_t k = 0; k < flows.size(); ++k) {
        // Find q in frame k+1 with q + f(q) = p: two fixed-point sweeps of
        // q <- p - f(q), seeded at p (nearest-neighbor inversion).
        float qx = x, qy = y;
        for (int it = 0; it < 2; ++it) {
          qx = x - sample_flow(flows[k], qy, qx, 0);
          qy = y - sample_flow(flows[k], qy, qx, 1);
        }
        if (qx < 0 || qx > w - 1 || qy < 0 || qy > h - 1) {
          tr.term = Trajectory::Term::OutOfImage;
          break;
        }
        const int qi = static_cast<int>(std::lround(qy)), qj = static_cast<int>(std::lround(qx));
        const float bx = qx + sample_flow(flows[k], qy, qx, 0) - x;
        const float by = qy + sample_flow(flows[k], qy, qx, 1) - y;
        const bool masked = !occl.empty() && occl[k].at(qi, qj) > 0.5f;
        if (masked || bx * bx + by * by > 0.25f) {
          tr.term = Trajectory::Term::Occluded;  // point covered or no valid correspondence
          break;
        }
        x = qx;
        y = qy;
        tr.pos.emplace_back(x, y);
      }
      out.push_back(std::move(tr));
    }
  return out;
}

double temporal_consistency(const std::vector<LabelMap>& pred_seq, const std::vector<Trajectory>& trajs) {
  long long total = 0, consistent = 0;
  for (const auto& tr : trajs) {
    if (tr.pos.size() < 2) continue;
    require(tr.pos.size() <= pred_seq.size(), "temporal_consistency: trajectory longer than prediction sequence");
    ++total;
    bool same = true;
    int first = -1;
    for (std::size_t t = 0; t < tr.pos.size(); ++t) {
      const int i = static_cast<int>(std::lround(tr.pos[t].second));
      const int j = static_cast<int>(std::lround(tr.pos[t].first));
      const int lab = pred_seq[t].at(std::min(pred_seq[t].h - 1, std::max(0, i)), std::min(pred_seq[t].w - 1, std::max(0, j)));
      if (first < 0)
        first = lab;
      else if (lab != first) {
        same = false;
        break;
      }
    }
    if (same) ++consistent;
  }
  require(total > 0, "temporal_consistency: no trajectory of length >= 2");
  return static_cast<double>(consistent) / static_cast<double>(total);
}

// ---- GRFP inference ------------------------------------------------------

LabelMap argmax_labels(const Tensor<float>& probs) {
  require(probs.rank() == 3, "argmax_labels: probs must be H x W x C");
  const int h = probs.shape[0], w = probs.shape[1], c = probs.shape[2];
  LabelMap out(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const float* p = &probs.at(i, j, 0);
      int best = 0;
      for (int k = 1; k < c; ++k)
        if (p[k] > p[best]) best = k;
      out.at(i, j) = best;
    }
  return out;
}

namespace {

using Id = Tape<float>::Id;

// Forward chain ending at frame `end`, using up to cfg.n_frames frames.
Id chain_belief(Tape<float>& tape, const StgruVars<float>& vars, const BackboneParams<float>& backbone,
                const VideoSample& clip, const std::vector<Tensor<float>>& flows, int end, int n_frames) {
  const int start = std::max(0, end - (n_frames - 1));
  std::vector<Id> frame_ids, flow_ids, unary_ids;
  for (int t = start; t <= end; ++t) {
    frame_ids.push_back(tape.leaf(clip.frames[t]));
    unary_ids.push_back(tape.leaf(unary_belief(clip.frames[t], backbone)));
    if (t > start) flow_ids.push_back(tape.leaf(flows[t - 1]));
  }
  return unroll(tape, vars, frame_ids, flow_ids, unary_ids);
}

// Backward-in-time chain from the clip end down to frame `end`.
Id backward_chain_belief(Tape<float>& tape, const StgruVars<float>& vars, const BackboneParams<float>& backbone,
                         const VideoSample& clip, const std::vector<Tensor<float>>& rflows, int end, int n_frames) {
  const int last = std::min(static_cast<int>(clip.frames.size()) - 1, end + (n_frames - 1));
  std::vector<Id> frame_ids, flow_ids, unary_ids;
  for (int t = last; t >= end; --t) {
    frame_ids.push_back(tape.leaf(clip.frames[t]));
    unary_ids.push_back(tape.leaf(unary_belief(clip.frames[t], backbone)));
    if (t < last) flow_ids.push_back(tape.leaf(rflows[t]));  // target t -> source t+1
  }
  return unroll(tape, vars, frame_ids, flow_ids, unary_ids);
}

std::vector<Tensor<float>> noisy_copy(const std::vector<Tensor<float>>& flows, float sigma, std::uint64_t seed) {
  std::vector<Tensor<float>> out = flows;
  if (sigma > 0) {
    std::mt19937_64 rng(seed);
    for (auto& f : out) add_flow_noise(f, sigma, rng);
  }
  return out;
}

}  // namespace

Tensor<float> grfp_infer(const VideoSample& clip, const GrfpModel& model, const InferenceConfig& cfg,
                         std::uint64_t clip_seed) {
  const std::uint64_t nseed = cfg.noise_seed ^ (clip_seed * 0x9E3779B97F4A7C15ull);
  const auto flows = noisy_copy(clip.flows, cfg.flow_noise_sigma, nseed);
  Tape<float> tape;
  const auto vars = register_stgru(tape, model.stgru);
  const Id fw = chain_belief(tape, vars, model.backbone, clip, flows, clip.label_index, cfg.n_frames);
  if (!cfg.fuse_backward || clip.label_index + 1 >= static_cast<int>(clip.frames.size()))
    return tape.val(fw);
  const auto rflows = noisy_copy(clip.rflows, cfg.flow_noise_sigma, nseed ^ 0x5DEECE66Dull);
  const auto bvars = model.has_backward ? register_stgru(tape, model.stgru_backward) : vars;
  const Id bw = backward_chain_belief(tape, bvars, model.backbone, clip, rflows, clip.label_index, cfg.n_frames);
  return tape.val(fuse_bidirectional(tape, fw, bw));
}

std::vector<LabelMap> grfp_predict_sequence(const VideoSample& clip, const GrfpModel& model,
                                            const InferenceConfig& cfg, std::uint64_t clip_seed) {
  const std::uint64_t nseed = cfg.noise_seed ^ (clip_seed * 0x9E3779B97F4A7C15ull);
  const auto flows = noisy_copy(clip.flows, cfg.flow_noise_sigma, nseed);
  std::vector<LabelMap> out(clip.frames.size());
  parallel_for(static_cast<int>(clip.frames.size()), [&](int t) {
    Tape<float> tape;
    const auto vars = register_stgru(tape, model.stgru);
    out[t] = argmax_labels(tape.val(chain_belief(tape, vars, model.backbone, clip, flows, t, cfg.n_frames)));
  });
  return out;
}

LabelMap static_predict(const Tensor<float>& frame, const BackboneParams<float>& backbone) {
  return argmax_labels(unary_belief(frame, backbone));
}

IouReport dataset_miou(const Dataset& ds, const std::string& split, const GrfpModel& model,
                       const InferenceConfig& cfg) {
  const auto infos = ds.split(split);
  std::vector<LabelMap> preds(infos.size()), truths(infos.size());
  parallel_for(static_cast<int>(infos.size()), [&](int k) {
    const VideoSample clip = load_clip(*infos[k]);
    preds[k] = argmax_labels(grfp_infer(clip, model, cfg, infos[k]->seed));
    truths[k] = clip.labels;
  });
  ConfusionMatrix cm(ds.n_classes);
  for (std::size_t k = 0; k < infos.size(); ++k) cm.add(truths[k], preds[k]);
  return iou_from_confusion(cm);
}

ConsistencyReport dataset_consistency(const Dataset& ds, const std::string& split, const GrfpModel& model,
                                      const InferenceConfig& cfg, int grid_stride) {
  ConsistencyReport rep;
  double gsum = 0, bsum = 0;
  for (const auto* clip_info : ds.split(split)) {
    const VideoSample clip = load_clip(*clip_info);
    const auto trajs = build_trajectories(clip.flows, clip.occl, grid_stride);
    const auto grfp_preds = grfp_predict_sequence(clip, model, cfg, clip_info->seed);
    std::vector<LabelMap> static_preds;
    for (const auto& f : clip.frames) static_preds.push_back(static_predict(f, model.backbone));
    const double g = temporal_consistency(grfp_preds, trajs);
    const double b = temporal_consistency(static_preds, trajs);
    rep.clip_ids.push_back(clip_info->id);
    rep.grfp.push_back(g);
    rep.baseline.push_back(b);
    gsum += g;
    bsum += b;
  }
  require(!rep.clip_ids.empty(), "dataset_consistency: empty split '" + split + "'");
  rep.grfp_avg = gsum / rep.clip_ids.size();
  rep.baseline_avg = bsum / rep.clip_ids.size();
  return rep;
}

std::vector<std::pair<int, double>> frames_ablation(const Dataset& ds, const std::string& split,
                                                    const GrfpModel& model, const InferenceConfig& cfg,
                                                    const std::vector<int>& frame_counts) {
  std::vector<std::pair<int, double>> rows;
  for (int n : frame_counts) {
    InferenceConfig c = cfg;
    c.n_frames = n;
    rows.emplace_back(n, dataset_miou(ds, split, model, c).mean);
  }
  return rows;
}

}  // namespace grfp
