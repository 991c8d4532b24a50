#pragma once

#include <random>
#include <vector>

#include "grfp/tape.hpp"

namespace grfp {

// Learnable symbols of one spatio-temporal GRU cell. The same struct holds
// the forward-chain parameters and, as a second instance, the backward-chain
// ones. lambda is kept in log space so it stays positive under training.
template <class T>
struct StgruParams {
  int channels = 0;       // C, semantic classes
  int conf_channels = 1;  // Cr, reset-gate channels (1 broadcasts over C)
  int ksize = 7;

  Tensor<T> w_ir;  // ksize x ksize x 3 x Cr
  Tensor<T> b_r;   // Cr
  Tensor<T> w_xh;  // ksize x ksize x C x C
  Tensor<T> w_hh;  // ksize x ksize x C x C
  Tensor<T> w_xz;  // ksize x ksize x C x C
  Tensor<T> w_hz;  // ksize x ksize x C x C
  Tensor<T> b_z;        // C
  Tensor<T> log_lambda;  // rank 0; lambda = exp(log_lambda) stays positive

  T lambda() const { return std::exp(log_lambda.data[0]); }

  // Identity-oriented init: the untrained cell approximately reproduces the
  // static prediction. w_xh gets an identity center tap scaled by 5, the
  // remaining kernels are zero-mean uniform +-0.01, biases 0, lambda 2.
  static StgruParams init_default(int c, int cr, T lambda_init, std::uint64_t seed, int ksize = 7) {
    StgruParams p;
    p.channels = c;
    p.conf_channels = cr;
    p.ksize = ksize;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.01, 0.01);
    auto noisy = [&](std::vector<int> shape) {
      Tensor<T> t(std::move(shape));
      for (T& v : t.data) v = static_cast<T>(u(rng));
      return t;
    };
    p.w_ir = noisy({ksize, ksize, 3, cr});
    p.b_r = Tensor<T>({cr});
    p.w_xh = noisy({ksize, ksize, c, c});
    const int mid = ksize / 2;
    for (int ch = 0; ch < c; ++ch) p.w_xh.data[((static_cast<std::size_t>(mid) * ksize + mid) * c + ch) * c + ch] = T(5);
    p.w_hh = noisy({ksize, ksize, c, c});
    p.w_xz = noisy({ksize, ksize, c, c});
    p.w_hz = noisy({ksize, ksize, c, c});
    p.b_z = Tensor<T>({c});
    p.log_lambda = Tensor<T>::scalar(std::log(lambda_init));
    return p;
  }

  std::vector<Tensor<T>*> tensors() { return {&w_ir, &b_r, &w_xh, &w_hh, &w_xz, &w_hz, &b_z, &log_lambda}; }
  static std::vector<std::string> tensor_names() {
    return {"w_ir", "b_r", "w_xh", "w_hh", "w_xz", "w_hz", "b_z", "log_lambda"};
  }
};

// Tape leaf ids for one registered parameter set.
template <class T>
struct StgruVars {
  typename Tape<T>::Id w_ir, b_r, w_xh, w_hh, w_xz, w_hz, b_z, log_lambda;
};

template <class T>
StgruVars<T> register_stgru(Tape<T>& tape, const StgruParams<T>& p) {
  StgruVars<T> v;
  v.w_ir = tape.leaf(p.w_ir);
  v.b_r = tape.leaf(p.b_r);
  v.w_xh = tape.leaf(p.w_xh);
  v.w_hh = tape.leaf(p.w_hh);
  v.w_xz = tape.leaf(p.w_xz);
  v.w_hz = tape.leaf(p.w_hz);
  v.b_z = tape.leaf(p.b_z);
  v.log_lambda = tape.leaf(p.log_lambda);
  return v;
}

// r_t = 1 - tanh(|W_ir * (I_t - warp(I_prev)) + b_r|); values in (0, 1].
template <class T>
typename Tape<T>::Id flow_confidence(Tape<T>& t, const StgruVars<T>& p, typename Tape<T>::Id i_t,
                                     typename Tape<T>::Id i_prev, typename Tape<T>::Id flow) {
  require(t.val(i_t).same_shape(t.val(i_prev)),
          "flow_confidence: image shapes differ, " + shape_to_string(t.val(i_t).shape) + " vs " +
              shape_to_string(t.val(i_prev).shape));
  auto residual = t.sub(i_t, t.warp(i_prev, flow));
  auto conv = t.conv2d(residual, p.w_ir, p.b_r, 1);
  return t.affine(t.tanh(t.abs(conv)), T(-1), T(1));
}

namespace detail {
template <class T>
inline void check_normalized(const Tensor<T>& x, const char* what) {
  require(x.rank() == 3, std::string(what) + ": belief must be H x W x C");
  const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      T s = 0;
      for (int k = 0; k < c; ++k) s += x.at(i, j, k);
      require(std::abs(static_cast<double>(s) - 1.0) <= 1e-3,
              std::string(what) + ": belief not channel-normalized (pixel sum " + std::to_string(static_cast<double>(s)) + ")");
    }
}
}  // namespace detail

// One recurrent step:
//   w_t = warp(h_prev)
//   r_t = 1 - tanh(|W_ir * (I_t - warp(I_prev)) + b_r|)
//   hcand = W_xh * x_t + W_hh * (r_t . w_t)
//   z_t = sigmoid(W_xz * x_t + W_hz * w_t + b_z)
//   h_t = softmax(lambda (1 - z_t) . w_t + z_t . hcand)
// h_prev enters only through its warped image w_t.
template <class T>
typename Tape<T>::Id stgru_step(Tape<T>& t, const StgruVars<T>& p, typename Tape<T>::Id h_prev,
                                typename Tape<T>::Id x_t, typename Tape<T>::Id i_prev, typename Tape<T>::Id i_t,
                                typename Tape<T>::Id flow) {
  detail::check_normalized(t.val(x_t), "stgru_step");
  auto w_t = t.warp(h_prev, flow);
  auto r_t = flow_confidence(t, p, i_t, i_prev, flow);
  auto hcand = t.add(t.conv2d(x_t, p.w_xh, -1, 1), t.conv2d(t.hadamard(r_t, w_t), p.w_hh, -1, 1));
  auto z_t = t.sigmoid(t.add(t.conv2d(x_t, p.w_xz, -1, 1), t.conv2d(w_t, p.w_hz, p.b_z, 1)));
  auto lam = t.exp(p.log_lambda);
  auto keep = t.hadamard(lam, t.hadamard(t.affine(z_t, T(-1), T(1)), w_t));
  return t.softmax_channels(t.add(keep, t.hadamard(z_t, hcand)));
}

// Chain of tied-parameter steps. frames[k] pairs with unaries[k]; flows[k]
// carries frame k+1 back to frame k in the order the lists are given (the
// caller reverses lists for a backward-in-time chain). Returns the belief at
// the chain end; a single-frame chain returns unaries[0] unchanged.
template <class T>
typename Tape<T>::Id unroll(Tape<T>& t, const StgruVars<T>& p, const std::vector<typename Tape<T>::Id>& frames,
                            const std::vector<typename Tape<T>::Id>& flows,
                            const std::vector<typename Tape<T>::Id>& unaries) {
  require(!frames.empty(), "unroll: need at least one frame");
  require(frames.size() == unaries.size(),
          "unroll: " + std::to_string(frames.size()) + " frames vs " + std::to_string(unaries.size()) + " unaries");
  require(flows.size() + 1 == frames.size(),
          "unroll: " + std::to_string(flows.size()) + " flows for " + std::to_string(frames.size()) + " frames");
  auto h = unaries[0];
  for (std::size_t k = 1; k < frames.size(); ++k)
    h = stgru_step(t, p, h, unaries[k], frames[k - 1], frames[k], flows[k - 1]);
  return h;
}

// Mean of two probability maps; normalization is preserved.
template <class T>
typename Tape<T>::Id fuse_bidirectional(Tape<T>& t, typename Tape<T>::Id h_fw, typename Tape<T>::Id h_bw) {
  require(t.val(h_fw).same_shape(t.val(h_bw)), "fuse_bidirectional: shape mismatch " +
                                                   shape_to_string(t.val(h_fw).shape) + " vs " +
                                                   shape_to_string(t.val(h_bw).shape));
  return t.scale(t.add(h_fw, h_bw), T(0.5));
}

// Unnormalized log-likelihood loss at the labeled frame.
template <class T>
typename Tape<T>::Id segmentation_loss(Tape<T>& t, typename Tape<T>::Id h, const LabelMap& labels) {
  return t.nll_loss(h, labels);
}

}  // namespace grfp
