#pragma once

#include <random>
#include <vector>

#include "grfp/tape.hpp"

namespace grfp {

// Small dilated per-frame segmentation network producing the unary class
// scores. Default architecture: 6 conv layers, 3x3, channels
// 3->32->32->32->32->32->C, dilations 1,1,2,4,8,1, ReLU between layers and
// none after the last. Spatial size is preserved throughout.
template <class T>
struct BackboneParams {
  struct Layer {
    Tensor<T> w;  // kh x kw x cin x cout
    Tensor<T> b;  // cout
    int dilation = 1;
  };
  std::vector<Layer> layers;

  int out_channels() const { return layers.empty() ? 0 : layers.back().w.shape[3]; }

  static BackboneParams make_default(int n_classes, std::uint64_t seed, int hidden = 32) {
    const std::vector<int> chans = {3, hidden, hidden, hidden, hidden, hidden, n_classes};
    const std::vector<int> dils = {1, 1, 2, 4, 8, 1};
    BackboneParams p;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < chans.size(); ++l) {
      Layer layer;
      const int cin = chans[l], cout = chans[l + 1];
      const double bound = std::sqrt(1.0 / (9.0 * cin));
      std::uniform_real_distribution<double> u(-bound, bound);
      layer.w = Tensor<T>({3, 3, cin, cout});
      for (T& v : layer.w.data) v = static_cast<T>(u(rng));
      layer.b = Tensor<T>({cout});
      layer.dilation = dils[l];
      p.layers.push_back(std::move(layer));
    }
    return p;
  }

  std::vector<Tensor<T>*> tensors() {
    std::vector<Tensor<T>*> out;
    for (auto& l : layers) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    return out;
  }
};

template <class T>
struct BackboneVars {
  struct Layer {
    typename Tape<T>::Id w, b;
    int dilation;
  };
  std::vector<Layer> layers;
};

template <class T>
BackboneVars<T> register_backbone(Tape<T>& tape, const BackboneParams<T>& p) {
  BackboneVars<T> v;
  for (const auto& l : p.layers) v.layers.push_back({tape.leaf(l.w), tape.leaf(l.b), l.dilation});
  return v;
}

// Class scores (pre-softmax) for one image.
template <class T>
typename Tape<T>::Id backbone_scores(Tape<T>& t, const BackboneVars<T>& p, typename Tape<T>::Id image) {
  auto h = image;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    h = t.conv2d(h, p.layers[l].w, p.layers[l].b, p.layers[l].dilation);
    if (l + 1 < p.layers.size()) h = t.relu(h);
  }
  return h;
}

// Channel-softmaxed scores: the x_t fed to the recurrent cell.
template <class T>
typename Tape<T>::Id unary_belief_on_tape(Tape<T>& t, const BackboneVars<T>& p, typename Tape<T>::Id image) {
  return t.softmax_channels(backbone_scores(t, p, image));
}

// Off-tape convenience for inference.
template <class T>
Tensor<T> backbone_forward(const Tensor<T>& image, const BackboneParams<T>& p) {
  Tape<T> tape;
  auto vars = register_backbone(tape, p);
  return tape.val(backbone_scores(tape, vars, tape.leaf(image)));
}

template <class T>
Tensor<T> unary_belief(const Tensor<T>& image, const BackboneParams<T>& p) {
  Tape<T> tape;
  auto vars = register_backbone(tape, p);
  return tape.val(unary_belief_on_tape(tape, vars, tape.leaf(image)));
}

}  // namespace grfp
