#pragma once

#include "grfp/tensor.hpp"

namespace grfp {

// Dilated "same" cross-correlation over H x W x Cin with a kh x kw x Cin x Cout
// kernel. Zero padding outside the image; odd kernel extents keep the padding
// symmetric. Output is H x W x Cout.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int dilation) {
  require(x.rank() == 3, "conv2d: input must be rank 3, got " + shape_to_string(x.shape));
  require(w.rank() == 4, "conv2d: kernel must be rank 4, got " + shape_to_string(w.shape));
  require(dilation >= 1, "conv2d: dilation must be >= 1");
  const int kh = w.shape[0], kw = w.shape[1], cin = w.shape[2], cout = w.shape[3];
  require(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel extents must be odd, got " + shape_to_string(w.shape));
  require(cin == x.shape[2], "conv2d: channel mismatch between input " + shape_to_string(x.shape) +
                                 " and kernel " + shape_to_string(w.shape));
  if (bias) {
    require(bias->rank() == 1 && bias->shape[0] == cout,
            "conv2d: bias shape " + shape_to_string(bias->shape) + " does not match kernel " + shape_to_string(w.shape));
  }
  const int h = x.shape[0], wd = x.shape[1];
  Tensor<T> y({h, wd, cout});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < wd; ++j) {
      T* yp = &y.at(i, j, 0);
      if (bias)
        for (int c = 0; c < cout; ++c) yp[c] = bias->data[c];
      for (int u = 0; u < kh; ++u) {
        const int xi = i + (u - kh / 2) * dilation;
        if (xi < 0 || xi >= h) continue;
        for (int v = 0; v < kw; ++v) {
          const int xj = j + (v - kw / 2) * dilation;
          if (xj < 0 || xj >= wd) continue;
          const T* xp = &x.at(xi, xj, 0);
          const T* wp = &w.data[((static_cast<std::size_t>(u) * kw + v) * cin) * cout];
          for (int ci = 0; ci < cin; ++ci) {
            const T xv = xp[ci];
            const T* wr = wp + static_cast<std::size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) yp[co] += xv * wr[co];
          }
        }
      }
    }
  }
  return y;
}

// Gradients of conv2d_forward w.r.t. input, kernel and bias. Accumulation
// follows a fixed loop order so results are deterministic.
template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, int dilation, const Tensor<T>& grad_y,
                     Tensor<T>* grad_x, Tensor<T>* grad_w, Tensor<T>* grad_b) {
  const int kh = w.shape[0], kw = w.shape[1], cin = w.shape[2], cout = w.shape[3];
  const int h = x.shape[0], wd = x.shape[1];
  if (grad_b) {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wd; ++j) {
        const T* gp = &grad_y.at(i, j, 0);
        for (int co = 0; co < cout; ++co) grad_b->data[co] += gp[co];
      }
  }
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < wd; ++j) {
      const T* gp = &grad_y.at(i, j, 0);
      for (int u = 0; u < kh; ++u) {
        const int xi = i + (u - kh / 2) * dilation;
        if (xi < 0 || xi >= h) continue;
        for (int v = 0; v < kw; ++v) {
          const int xj = j + (v - kw / 2) * dilation;
          if (xj < 0 || xj >= wd) continue;
          const T* xp = &x.at(xi, xj, 0);
          const std::size_t wbase = (static_cast<std::size_t>(u) * kw + v) * cin * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const T* wr = &w.data[wbase + static_cast<std::size_t>(ci) * cout];
            if (grad_x) {
              T acc = 0;
              for (int co = 0; co < cout; ++co) acc += wr[co] * gp[co];
              grad_x->at(xi, xj, ci) += acc;
            }
            if (grad_w) {
              const T xv = xp[ci];
              T* gw = &grad_w->data[wbase + static_cast<std::size_t>(ci) * cout];
              for (int co = 0; co < cout; ++co) gw[co] += xv * gp[co];
            }
          }
        }
      }
    }
  }
}

// Test-only reference: literal transcription of the cross-correlation sum.
template <class T>
Tensor<T> conv2d_oracle(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int dilation) {
  const int kh = w.shape[0], kw = w.shape[1], cin = w.shape[2], cout = w.shape[3];
  const int h = x.shape[0], wd = x.shape[1];
  Tensor<T> y({h, wd, cout});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < wd; ++j)
      for (int co = 0; co < cout; ++co) {
        T acc = bias ? bias->data[co] : T(0);
        for (int u = 0; u < kh; ++u)
          for (int v = 0; v < kw; ++v)
            for (int ci = 0; ci < cin; ++ci) {
              const int xi = i + (u - kh / 2) * dilation;
              const int xj = j + (v - kw / 2) * dilation;
              if (xi < 0 || xi >= h || xj < 0 || xj >= wd) continue;
              acc += x.at(xi, xj, ci) * w.data[((static_cast<std::size_t>(u) * kw + v) * cin + ci) * cout + co];
            }
        y.at(i, j, co) = acc;
      }
  return y;
}

}  // namespace grfp
