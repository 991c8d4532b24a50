// End-to-end acceptance gate. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fail. argv[1] must name the grfp CLI binary (used for
// the rerun-determinism criterion).
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "grfp/checkpoint.hpp"
#include "grfp/eval.hpp"
#include "grfp/flowdata.hpp"
#include "grfp/gradsuite.hpp"
#include "grfp/stgru.hpp"
#include "grfp/train.hpp"
#include "grfp/warp.hpp"

namespace fs = std::filesystem;
using namespace grfp;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::cout << "criterion " << criterion << ": " << (pass ? "PASS" : "FAIL") << " - " << detail << '\n';
  std::cout.flush();
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

template <class T>
Tensor<T> random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (T& v : t.data) v = static_cast<T>(u(rng));
  return t;
}

template <class T>
Tensor<T> random_belief(int h, int w, int c, std::mt19937_64& rng) {
  Tensor<T> t({h, w, c});
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      T s = 0;
      for (int k = 0; k < c; ++k) s += (t.at(i, j, k) = static_cast<T>(u(rng)));
      for (int k = 0; k < c; ++k) t.at(i, j, k) /= s;
    }
  return t;
}

// ---- criterion 1: finite-difference gradient suite ------------------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  const auto results = run_gradcheck_suite(7);
  double worst = 0;
  std::string worst_name;
  for (const auto& [name, err] : results)
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "max rel err " << std::scientific << std::setprecision(2) << worst << " (" << worst_name << ") in "
     << std::fixed << std::setprecision(1) << secs << "s";
  report(1, worst <= 1e-4 && secs <= 120.0, os.str());
}

// ---- criterion 2: warp oracle equivalence ----------------------------------

void criterion_warp_oracle() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> dim(1, 16), chan(1, 4);
  std::uniform_real_distribution<double> val(-1, 1), disp(-8, 8);
  int exact = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const int h = dim(rng), w = dim(rng), c = chan(rng);
    const auto x = random_tensor<double>({h, w, c}, rng, -1, 1);
    Tensor<double> f({h, w, 2});
    for (double& v : f.data) v = disp(rng);
    exact += warp_bilinear(x, f).data == warp_oracle(x, f).data;
  }
  report(2, exact == trials, std::to_string(exact) + "/" + std::to_string(trials) + " instances bit-exact");
}

// ---- criterion 3: structural invariants ------------------------------------

void criterion_stgru_invariants() {
  std::mt19937_64 rng(3);
  const int h = 8, w = 8, c = 4;
  bool ok = true;
  std::string detail = "normalization, gate endpoints, aligned r_t all hold";

  // Output normalization under random finite parameters.
  for (int trial = 0; trial < 5 && ok; ++trial) {
    auto p = StgruParams<double>::init_default(c, 1, 1.5, 100 + trial);
    for (auto* t : p.tensors()) {
      std::uniform_real_distribution<double> u(-0.5, 0.5);
      for (double& v : t->data) v += u(rng);
    }
    Tape<double> t;
    const auto vars = register_stgru(t, p);
    const auto out = t.val(stgru_step(t, vars, t.leaf(random_belief<double>(h, w, c, rng)),
                                      t.leaf(random_belief<double>(h, w, c, rng)),
                                      t.leaf(random_tensor<double>({h, w, 3}, rng, 0, 1)),
                                      t.leaf(random_tensor<double>({h, w, 3}, rng, 0, 1)),
                                      t.leaf(random_tensor<double>({h, w, 2}, rng, -2, 2))));
    for (int i = 0; i < h && ok; ++i)
      for (int j = 0; j < w; ++j) {
        double s = 0;
        for (int k = 0; k < c; ++k) s += out.at(i, j, k);
        if (std::abs(s - 1.0) > 1e-5) {
          ok = false;
          detail = "normalization violated (pixel sum " + std::to_string(s) + ")";
          break;
        }
      }
  }

  // Gate saturation endpoints.
  if (ok) {
    auto p = StgruParams<double>::init_default(c, 1, 2.0, 200);
    for (Tensor<double>* t : {&p.w_ir, &p.w_hh, &p.w_xz, &p.w_hz}) t->data.assign(t->data.size(), 0.0);
    const auto h_prev = random_belief<double>(h, w, c, rng);
    const auto x_t = random_belief<double>(h, w, c, rng);
    const auto img = random_tensor<double>({h, w, 3}, rng, 0, 1);
    const auto flow = random_tensor<double>({h, w, 2}, rng, -1.3, 1.3);

    auto run = [&](double bz) {
      auto q = p;
      q.b_z.data.assign(c, bz);
      Tape<double> t;
      const auto vars = register_stgru(t, q);
      return t.val(stgru_step(t, vars, t.leaf(h_prev), t.leaf(x_t), t.leaf(img), t.leaf(img), t.leaf(flow)));
    };

    {  // z -> 0: softmax(lambda * w_t)
      const auto got = run(-40.0);
      Tape<double> t;
      const auto want = t.val(t.softmax_channels(t.scale(t.warp(t.leaf(h_prev), t.leaf(flow)), p.lambda())));
      for (std::size_t i = 0; i < got.data.size() && ok; ++i)
        if (std::abs(got.data[i] - want.data[i]) > 1e-9) {
          ok = false;
          detail = "z->0 endpoint mismatch";
        }
    }
    if (ok) {  // z -> 1: softmax(hcand) = softmax(W_xh * x_t) with zeroed side kernels
      const auto got = run(40.0);
      Tape<double> t;
      const auto want = t.val(t.softmax_channels(t.conv2d(t.leaf(x_t), t.leaf(p.w_xh), -1, 1)));
      for (std::size_t i = 0; i < got.data.size() && ok; ++i)
        if (std::abs(got.data[i] - want.data[i]) > 1e-9) {
          ok = false;
          detail = "z->1 endpoint mismatch";
        }
    }
  }

  // r_t = 1 under perfect alignment with b_r = 0.
  if (ok) {
    const auto p = StgruParams<double>::init_default(c, 1, 2.0, 300);
    const auto img = random_tensor<double>({h, w, 3}, rng, 0, 1);
    Tape<double> t;
    const auto vars = register_stgru(t, p);
    const auto r = t.val(flow_confidence(t, vars, t.leaf(img), t.leaf(img), t.leaf(Tensor<double>({h, w, 2}))));
    for (double v : r.data)
      if (v != 1.0) {
        ok = false;
        detail = "aligned r_t != 1";
        break;
      }
  }
  report(3, ok, detail);
}

// ---- criteria 4-7: the training pipeline -----------------------------------

struct Pipeline {
  fs::path work;
  Dataset ds;
  Dataset ds_post;  // clips extended past the labeled frame
  GrfpModel untrained, trained;
  double static_miou = 0, pretrain_minutes = 0, total_minutes = 0;
};

InferenceConfig scored_config(int n_frames, bool backward = false) {
  InferenceConfig cfg;
  cfg.n_frames = n_frames;
  cfg.fuse_backward = backward;
  cfg.flow_noise_sigma = 0.5f;
  cfg.noise_seed = 99;
  return cfg;
}

Pipeline run_pipeline() {
  Pipeline pl;
  pl.work = fs::temp_directory_path() / "grfp_acceptance";
  fs::remove_all(pl.work);
  fs::create_directories(pl.work);
  const auto t0 = Clock::now();

  SceneTemplate tmpl;  // library defaults: 64x64, C=5, 5 frames
  make_dataset((pl.work / "data").string(), 20, 5, 5, tmpl, 1);
  pl.ds = load_dataset((pl.work / "data").string());

  SceneTemplate post = tmpl;
  post.post_frames = 4;
  make_dataset((pl.work / "data_post").string(), 2, 5, 2, post, 2);
  pl.ds_post = load_dataset((pl.work / "data_post").string());

  TrainConfig cfg;
  cfg.seed = 1;
  cfg.n_frames = 5;
  cfg.steps = 300;
  cfg.pretrain_epochs = 60;
  cfg.stgru_lr = 1e-3f;       // short-run rate; the default is tuned for ~10^4 steps
  cfg.lambda_init = 4.0f;     // sharper renormalization stabilizes short-run fusion
  cfg.flow_noise_sigma = 0.5f;  // train under the scored flow-noise protocol
  cfg.val_interval = 1000;      // no mid-training validation inside the gate

  auto backbone = BackboneParams<float>::make_default(pl.ds.n_classes, cfg.seed ^ 0xBBull);
  backbone = pretrain_backbone(pl.ds, std::move(backbone), cfg.pretrain_epochs, cfg.seed, cfg.pretrain_lr);
  pl.pretrain_minutes = seconds_since(t0) / 60.0;

  pl.untrained.backbone = backbone;
  pl.untrained.stgru = StgruParams<float>::init_default(pl.ds.n_classes, 1, 2.0f, 5);

  std::ofstream metrics((pl.work / "metrics.txt").string());
  const auto res = train_grfp(pl.ds, cfg, std::move(backbone), metrics);
  pl.trained = res.model;

  pl.static_miou = dataset_miou(pl.ds, "val", pl.trained, scored_config(1)).mean;
  pl.total_minutes = seconds_since(t0) / 60.0;
  return pl;
}

void criteria_pipeline(const Pipeline& pl) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);

  // 4: untrained GRFP(5) within 1 point of the untrained-model static baseline.
  InferenceConfig exact;
  exact.n_frames = 1;
  const double static_untrained = dataset_miou(pl.ds, "val", pl.untrained, exact).mean;
  exact.n_frames = 5;
  const double grfp_untrained = dataset_miou(pl.ds, "val", pl.untrained, exact).mean;
  os << "untrained GRFP(5) " << grfp_untrained << " vs static " << static_untrained;
  report(4, grfp_untrained >= static_untrained - 0.010, os.str());

  // 5: trained margins under flow noise sigma = 0.5, inside the time budget.
  const double grfp5 = dataset_miou(pl.ds, "val", pl.trained, scored_config(5)).mean;
  const auto cons = dataset_consistency(pl.ds, "val", pl.trained, scored_config(5));
  os.str("");
  os << "mIoU " << grfp5 << " vs static " << pl.static_miou << " (need +0.010); consistency " << cons.grfp_avg
     << " vs " << cons.baseline_avg << " (need +0.020); pipeline " << std::setprecision(1) << pl.total_minutes
     << " min (pretrain " << pl.pretrain_minutes << ")";
  report(5,
         grfp5 >= pl.static_miou + 0.010 && cons.grfp_avg >= cons.baseline_avg + 0.020 && pl.total_minutes <= 30.0,
         os.str());

  // 6: frames ablation with the trained checkpoint, same scored protocol.
  const auto ab = frames_ablation(pl.ds, "val", pl.trained, scored_config(5), {1, 4, 5});
  const double m1 = ab[0].second, m4 = ab[1].second, m5 = ab[2].second;
  os.str("");
  os << std::setprecision(4) << "mIoU(1) " << m1 << ", mIoU(4) " << m4 << ", mIoU(5) " << m5;
  report(6, m4 >= m1 && m5 >= m4 - 0.002, os.str());

  // 7: forward+backward fusion on clips extended past the labeled frame.
  const double stat_post = dataset_miou(pl.ds_post, "val", pl.trained, scored_config(1)).mean;
  const double fw = dataset_miou(pl.ds_post, "val", pl.trained, scored_config(5)).mean;
  const double fused = dataset_miou(pl.ds_post, "val", pl.trained, scored_config(5, true)).mean;
  os.str("");
  os << "fused " << fused << ", forward " << fw << ", static " << stat_post;
  report(7, fused >= fw - 0.002 && fused >= stat_post, os.str());
}

// ---- criterion 8: metric unit values ----------------------------------------

void criterion_metrics() {
  bool ok = true;
  std::string detail = "IoU 1/3 exact, 20 consistency recounts equal, uniform loss = ln C";

  {  // hand-counted IoU = 1/3 for both classes
    LabelMap truth(1, 4), pred(1, 4);
    truth.ids = {0, 0, 1, 1};
    pred.ids = {0, 1, 1, 0};
    const auto r = miou({pred}, {truth}, 2);
    if (!(r.per_class[0] == 1.0 / 3.0 && r.per_class[1] == 1.0 / 3.0 && r.mean == 1.0 / 3.0)) {
      ok = false;
      detail = "IoU 1/3 example mismatch";
    }
  }

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20 && ok; ++trial) {
    // Random prediction sequences against zero-flow trajectories: consistency
    // must equal the brute-force fraction of grid points whose label never
    // changes over time.
    const int h = 12, w = 12, n = 4, c = 3;
    std::vector<LabelMap> preds;
    std::uniform_int_distribution<int> lab(0, c - 1);
    for (int t = 0; t < n; ++t) {
      LabelMap m(h, w);
      for (int& v : m.ids) v = lab(rng);
      preds.push_back(std::move(m));
    }
    std::vector<Tensor<float>> flows(n - 1, Tensor<float>({h, w, 2}));
    const auto trajs = build_trajectories(flows, {}, 3);
    const double got = temporal_consistency(preds, trajs);

    long long stable = 0, total = 0;
    for (int i = 3 / 2; i < h; i += 3)
      for (int j = 3 / 2; j < w; j += 3) {
        ++total;
        bool same = true;
        for (int t = 1; t < n; ++t) same = same && preds[t].at(i, j) == preds[0].at(i, j);
        stable += same;
      }
    if (got != static_cast<double>(stable) / static_cast<double>(total)) {
      ok = false;
      detail = "consistency recount mismatch on trial " + std::to_string(trial);
    }
  }

  if (ok) {  // uniform belief: per-pixel loss is exactly ln C
    const int c = 5;
    Tensor<double> uniform({3, 3, c}, 1.0 / c);
    LabelMap lab(3, 3, 2);
    Tape<double> t;
    const double loss = t.val(t.nll_loss(t.leaf(uniform), lab)).data[0];
    if (std::abs(loss / 9.0 - std::log(static_cast<double>(c))) > 1e-6) {
      ok = false;
      detail = "uniform-belief loss != ln C";
    }
  }
  report(8, ok, detail);
}

// ---- criterion 9: CLI rerun determinism -------------------------------------

void criterion_determinism(const std::string& cli) {
  const fs::path work = fs::temp_directory_path() / "grfp_acceptance_det";
  fs::remove_all(work);
  fs::create_directories(work);

  auto sh = [&](const std::string& cmd) {
    const std::string full = cmd + " > /dev/null 2>&1";
    return std::system(full.c_str()) == 0;
  };

  bool ok = sh(cli + " generate --out " + (work / "data").string() +
               " --seed 3 --size 32 --clip-frames 4 --train 4 --val 2 --test 1");
  for (int run = 1; run <= 2 && ok; ++run) {
    const std::string out = (work / ("train" + std::to_string(run))).string();
    ok = ok && sh(cli + " train --dataset " + (work / "data").string() + " --out " + out +
                  " --seed 7 --frames 4 --steps 6 --pretrain-epochs 4 --val-interval 3");
    ok = ok && sh(cli + " eval --dataset " + (work / "data").string() + " --checkpoint " + out + " --out " +
                  (work / ("eval" + std::to_string(run))).string() + " --frames 4 --flow-noise 0.5 --seed 11");
  }

  std::string detail = "train/eval reruns byte-identical";
  if (ok) {
    for (const char* f : {"metrics.txt", "pretrain_log.txt", "stgru/lambda.GRFPTNSR", "stgru/w_xh.GRFPTNSR",
                          "backbone/layer0_w.GRFPTNSR"})
      if (read_file(work / "train1" / f) != read_file(work / "train2" / f)) {
        ok = false;
        detail = std::string("training artifact differs: ") + f;
      }
    for (const char* f : {"ablation.txt", "per_class_iou.txt", "consistency.txt"})
      if (ok && read_file(work / "eval1" / f) != read_file(work / "eval2" / f)) {
        ok = false;
        detail = std::string("eval table differs: ") + f;
      }
  } else {
    detail = "CLI invocation failed";
  }
  report(9, ok, detail);
  fs::remove_all(work);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: grfp_acceptance <path-to-grfp-cli>\n";
    return 2;
  }
  std::cout << "acceptance gate (workers: GRFP_THREADS or hardware)\n";

  criterion_gradients();
  criterion_warp_oracle();
  criterion_stgru_invariants();
  const Pipeline pl = run_pipeline();
  criteria_pipeline(pl);
  criterion_metrics();
  criterion_determinism(argv[1]);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
  return failures == 0 ? 0 : 1;
}
