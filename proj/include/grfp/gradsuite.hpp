#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "grfp/backbone.hpp"
#include "grfp/gradcheck.hpp"
#include "grfp/stgru.hpp"

namespace grfp {

namespace gradsuite_detail {

inline Tensor<double> random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data) v = u(rng);
  return t;
}

// Flow values kept at least 1e-3 away from integer sample offsets so the
// check stays clear of the bilinear kernel's kinks.
inline Tensor<double> random_flow(int h, int w, std::mt19937_64& rng) {
  Tensor<double> f = random_tensor({h, w, 2}, rng, -1.7, 1.7);
  for (double& v : f.data) {
    const double frac = v - std::floor(v);
    if (frac < 1e-3) v += 0.01;
    if (frac > 1.0 - 1e-3) v -= 0.01;
  }
  return f;
}

inline Tensor<double> random_belief(int h, int w, int c, std::mt19937_64& rng) {
  Tensor<double> b = random_tensor({h, w, c}, rng);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double mx = b.at(i, j, 0);
      for (int k = 1; k < c; ++k) mx = std::max(mx, b.at(i, j, k));
      double s = 0;
      for (int k = 0; k < c; ++k) {
        b.at(i, j, k) = std::exp(b.at(i, j, k) - mx);
        s += b.at(i, j, k);
      }
      for (int k = 0; k < c; ++k) b.at(i, j, k) /= s;
    }
  return b;
}

inline StgruParams<double> random_stgru(int c, std::uint64_t seed) {
  StgruParams<double> p = StgruParams<double>::init_default(c, 1, 2.0, seed);
  std::mt19937_64 rng(seed ^ 0xABCDull);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto* t : p.tensors())
    for (double& v : t->data) v += u(rng);
  return p;
}

inline LabelMap random_labels(int h, int w, int c, std::mt19937_64& rng) {
  LabelMap lab(h, w);
  std::uniform_int_distribution<int> cls(0, c - 1);
  for (int& v : lab.ids) v = cls(rng);
  return lab;
}

}  // namespace gradsuite_detail

// Finite-difference verification of every differentiable path the model
// uses: warp (to source and flow), one STGRU step, a 3-frame unroll through
// the loss, the backbone, and the loss itself. 64-bit throughout. Returns
// (name, max relative error) per check.
inline std::vector<std::pair<std::string, double>> run_gradcheck_suite(std::uint64_t seed = 7) {
  using namespace gradsuite_detail;
  std::vector<std::pair<std::string, double>> out;
  std::mt19937_64 rng(seed);

  {  // warp: loss = sum(wgt . warp(x, f)), gradients to both x and f
    const auto x = random_tensor({6, 6, 3}, rng);
    const auto f = random_flow(6, 6, rng);
    const auto wgt = random_tensor({6, 6, 3}, rng);
    const double err = grad_check<double>({x, f}, [&](Tape<double>& t, const std::vector<int>& ids) {
      return t.sum(t.hadamard(t.leaf(wgt), t.warp(ids[0], ids[1])));
    });
    out.emplace_back("warp_bilinear", err);
  }

  const int c = 2;
  auto params = random_stgru(c, seed ^ 0x517Aull);
  auto param_leaves = [&](Tape<double>& t, const std::vector<int>& ids, int base) {
    return StgruVars<double>{ids[base], ids[base + 1], ids[base + 2], ids[base + 3],
                             ids[base + 4], ids[base + 5], ids[base + 6], ids[base + 7]};
  };
  std::vector<Tensor<double>> param_values = {params.w_ir, params.b_r, params.w_xh, params.w_hh,
                                              params.w_xz, params.w_hz, params.b_z, params.log_lambda};

  {  // one cell step, gradients to parameters, state, input, images and flow
    const int h = 5, w = 5;
    std::vector<Tensor<double>> inputs = param_values;
    inputs.push_back(random_belief(h, w, c, rng));       // h_prev
    inputs.push_back(random_belief(h, w, c, rng));       // x_t
    inputs.push_back(random_tensor({h, w, 3}, rng, 0, 1));  // I_prev
    inputs.push_back(random_tensor({h, w, 3}, rng, 0, 1));  // I_t
    inputs.push_back(random_flow(h, w, rng));            // flow
    const auto wgt = random_tensor({h, w, c}, rng);
    const double err = grad_check<double>(inputs, [&](Tape<double>& t, const std::vector<int>& ids) {
      const auto vars = param_leaves(t, ids, 0);
      const auto ht = stgru_step(t, vars, ids[8], ids[9], ids[10], ids[11], ids[12]);
      return t.sum(t.hadamard(t.leaf(wgt), ht));
    });
    out.emplace_back("stgru_step", err);
  }

  {  // loss of a 3-frame unroll: parameters, unaries, frames, flows
    const int h = 6, w = 6;
    std::vector<Tensor<double>> inputs = param_values;
    for (int k = 0; k < 3; ++k) inputs.push_back(random_belief(h, w, c, rng));       // unaries
    for (int k = 0; k < 3; ++k) inputs.push_back(random_tensor({h, w, 3}, rng, 0, 1));  // frames
    for (int k = 0; k < 2; ++k) inputs.push_back(random_flow(h, w, rng));             // flows
    const auto labels = random_labels(h, w, c, rng);
    const double err = grad_check<double>(inputs, [&](Tape<double>& t, const std::vector<int>& ids) {
      const auto vars = param_leaves(t, ids, 0);
      const std::vector<int> unaries{ids[8], ids[9], ids[10]};
      const std::vector<int> frames{ids[11], ids[12], ids[13]};
      const std::vector<int> flows{ids[14], ids[15]};
      return segmentation_loss(t, unroll(t, vars, frames, flows, unaries), labels);
    });
    out.emplace_back("unroll3_loss", err);
  }

  {  // thin backbone (same layer structure) through the loss
    auto bb = BackboneParams<double>::make_default(3, seed ^ 0xBBull, /*hidden=*/4);
    std::mt19937_64 brng(seed ^ 0xBB2ull);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (auto* t : bb.tensors())
      for (double& v : t->data) v += u(brng);
    const int h = 8, w = 8;
    std::vector<Tensor<double>> inputs;
    std::vector<int> dils;
    for (const auto& l : bb.layers) {
      inputs.push_back(l.w);
      inputs.push_back(l.b);
      dils.push_back(l.dilation);
    }
    inputs.push_back(random_tensor({h, w, 3}, rng, 0, 1));
    const auto labels = random_labels(h, w, 3, rng);
    const double err = grad_check<double>(inputs, [&](Tape<double>& t, const std::vector<int>& ids) {
      BackboneVars<double> vars;
      for (std::size_t l = 0; l < dils.size(); ++l)
        vars.layers.push_back({ids[2 * l], ids[2 * l + 1], dils[l]});
      return t.nll_loss(unary_belief_on_tape(t, vars, ids.back()), labels);
    });
    out.emplace_back("backbone_loss", err);
  }

  {  // loss alone, against pre-softmax scores
    const int h = 6, w = 6, cc = 4;
    const auto scores = random_tensor({h, w, cc}, rng);
    auto labels = random_labels(h, w, cc, rng);
    labels.at(0, 0) = LabelMap::kIgnore;  // exercise the ignore path
    const double err = grad_check<double>({scores}, [&](Tape<double>& t, const std::vector<int>& ids) {
      return segmentation_loss(t, t.softmax_channels(ids[0]), labels);
    });
    out.emplace_back("segmentation_loss", err);
  }

  return out;
}

}  // namespace grfp
