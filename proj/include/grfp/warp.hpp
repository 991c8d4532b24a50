#pragma once

#include "grfp/tensor.hpp"

namespace grfp {

// Bilinear interpolation kernel k(t) = max(0, 1 - |t|).
template <class T>
inline T bilinear_kernel(T t) {
  T a = T(1) - std::abs(t);
  return a > T(0) ? a : T(0);
}

// Subgradient of k; defined as 0 at the kinks |t| in {0, 1}.
template <class T>
inline T bilinear_kernel_deriv(T t) {
  if (t > T(0) && t < T(1)) return T(-1);
  if (t < T(0) && t > T(-1)) return T(1);
  return T(0);
}

namespace detail {
template <class T>
inline void check_warp_shapes(const Tensor<T>& x, const Tensor<T>& f) {
  require(x.rank() == 3, "warp: source must be rank 3, got " + shape_to_string(x.shape));
  require(f.rank() == 3 && f.shape[2] == 2, "warp: flow must be H x W x 2, got " + shape_to_string(f.shape));
  require(x.shape[0] == f.shape[0] && x.shape[1] == f.shape[1],
          "warp: spatial mismatch between source " + shape_to_string(x.shape) + " and flow " + shape_to_string(f.shape));
}
}  // namespace detail

// Backward warping: the output at (i, j) samples the source at
// (i + f^y, j + f^x) with the bilinear kernel. Flow channel 0 is the
// horizontal displacement f^x, channel 1 the vertical f^y. Samples outside
// the source yield 0 (zero-padded source).
template <class T>
Tensor<T> warp_bilinear(const Tensor<T>& x, const Tensor<T>& f) {
  detail::check_warp_shapes(x, f);
  const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
  Tensor<T> y({h, w, c});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const T sy = i + f.at(i, j, 1);
      const T sx = j + f.at(i, j, 0);
      const int m0 = static_cast<int>(std::floor(sy));
      const int n0 = static_cast<int>(std::floor(sx));
      T* yp = &y.at(i, j, 0);
      for (int m = m0; m <= m0 + 1; ++m) {
        if (m < 0 || m >= h) continue;
        const T ky = bilinear_kernel(sy - m);
        if (ky == T(0)) continue;
        for (int n = n0; n <= n0 + 1; ++n) {
          if (n < 0 || n >= w) continue;
          const T kx = bilinear_kernel(sx - n);
          if (kx == T(0)) continue;
          const T* xp = &x.at(m, n, 0);
          // same product association as the reference sum, for exact agreement
          for (int ch = 0; ch < c; ++ch) yp[ch] += xp[ch] * ky * kx;
        }
      }
    }
  }
  return y;
}

// Gradients of warp_bilinear to both the source map and the flow field.
// grad_x scatters each output gradient onto its <= 4 taps; grad_f uses the
// kernel subgradient (0 at integer-distance kinks) summed over channels.
template <class T>
void warp_backward(const Tensor<T>& grad_y, const Tensor<T>& x, const Tensor<T>& f, Tensor<T>* grad_x,
                   Tensor<T>* grad_f) {
  detail::check_warp_shapes(x, f);
  require(grad_y.same_shape(x), "warp_backward: grad shape " + shape_to_string(grad_y.shape) +
                                    " does not match source " + shape_to_string(x.shape));
  const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const T sy = i + f.at(i, j, 1);
      const T sx = j + f.at(i, j, 0);
      const int m0 = static_cast<int>(std::floor(sy));
      const int n0 = static_cast<int>(std::floor(sx));
      const T* gp = &grad_y.at(i, j, 0);
      T gfx = 0, gfy = 0;
      for (int m = m0; m <= m0 + 1; ++m) {
        if (m < 0 || m >= h) continue;
        const T ky = bilinear_kernel(sy - m);
        const T dky = bilinear_kernel_deriv(sy - m);
        for (int n = n0; n <= n0 + 1; ++n) {
          if (n < 0 || n >= w) continue;
          const T kx = bilinear_kernel(sx - n);
          const T dkx = bilinear_kernel_deriv(sx - n);
          const T* xp = &x.at(m, n, 0);
          T gdotx = 0;
          for (int ch = 0; ch < c; ++ch) gdotx += gp[ch] * xp[ch];
          if (grad_x && ky * kx != T(0)) {
            T* gxp = &grad_x->at(m, n, 0);
            const T wgt = ky * kx;
            for (int ch = 0; ch < c; ++ch) gxp[ch] += wgt * gp[ch];
          }
          gfx += gdotx * ky * dkx;
          gfy += gdotx * dky * kx;
        }
      }
      if (grad_f) {
        grad_f->at(i, j, 0) += gfx;
        grad_f->at(i, j, 1) += gfy;
      }
    }
  }
}

// Test-only reference: dense O(H^2 W^2) evaluation of the warping sum.
template <class T>
Tensor<T> warp_oracle(const Tensor<T>& x, const Tensor<T>& f) {
  detail::check_warp_shapes(x, f);
  const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
  Tensor<T> y({h, w, c});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int ch = 0; ch < c; ++ch) {
        T acc = 0;
        for (int m = 0; m < h; ++m)
          for (int n = 0; n < w; ++n)
            acc += x.at(m, n, ch) * bilinear_kernel(i + f.at(i, j, 1) - m) * bilinear_kernel(j + f.at(i, j, 0) - n);
        y.at(i, j, ch) = acc;
      }
  return y;
}

}  // namespace grfp
