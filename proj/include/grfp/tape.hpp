#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "grfp/conv.hpp"
#include "grfp/tensor.hpp"
#include "grfp/warp.hpp"

namespace grfp {

// Reverse-mode autodiff over an append-only record of primitive applications.
// Entries are in topological order by construction; backward() replays the
// record once, in reverse, accumulating gradients with a fixed summation
// order. A tape is confined to one thread while recording.
template <class T>
class Tape {
 public:
  using Id = int;

  Id leaf(Tensor<T> v) {
    nodes_.push_back(Node{std::move(v), nullptr});
    return static_cast<Id>(nodes_.size()) - 1;
  }

  const Tensor<T>& val(Id id) const { return nodes_.at(id).value; }
  std::size_t node_count() const { return nodes_.size(); }

  // Gradient of the last backward() loss w.r.t. node `id`; a zero tensor of
  // the node's shape if the loss does not depend on it.
  Tensor<T> grad(Id id) const {
    if (id < static_cast<Id>(grads_.size()) && !grads_[id].data.empty()) return grads_[id];
    const Tensor<T>& v = nodes_.at(id).value;
    Tensor<T> z;
    z.shape = v.shape;
    z.data.assign(v.data.size(), T(0));
    return z;
  }

  void backward(Id loss_id) {
    require(nodes_.at(loss_id).value.is_scalar(), "backward: loss must be a scalar tensor, got shape " +
                                                      shape_to_string(nodes_[loss_id].value.shape));
    grads_.assign(nodes_.size(), Tensor<T>{});
    grads_[loss_id] = Tensor<T>::scalar(T(1));
    for (Id id = loss_id; id >= 0; --id) {
      if (grads_[id].data.empty()) continue;
      if (nodes_[id].back) nodes_[id].back(*this, id);
    }
  }

  // ---- elementwise -------------------------------------------------------

  Id add(Id a, Id b) { return binary(a, b, BinOp::Add); }
  Id sub(Id a, Id b) { return binary(a, b, BinOp::Sub); }
  Id hadamard(Id a, Id b) { return binary(a, b, BinOp::Mul); }

  Id sigmoid(Id a) {
    Tensor<T> y = val(a);
    for (T& v : y.data) v = T(1) / (T(1) + std::exp(-v));
    return unary(a, std::move(y), [](T yv, T) { return yv * (T(1) - yv); });
  }

  Id tanh(Id a) {
    Tensor<T> y = val(a);
    for (T& v : y.data) v = std::tanh(v);
    return unary(a, std::move(y), [](T yv, T) { return T(1) - yv * yv; });
  }

  Id abs(Id a) {
    Tensor<T> y = val(a);
    for (T& v : y.data) v = std::abs(v);
    // subgradient 0 at the kink
    return unary(a, std::move(y), [](T, T xv) { return xv > T(0) ? T(1) : (xv < T(0) ? T(-1) : T(0)); });
  }

  Id relu(Id a) {
    Tensor<T> y = val(a);
    for (T& v : y.data) v = v > T(0) ? v : T(0);
    return unary(a, std::move(y), [](T, T xv) { return xv > T(0) ? T(1) : T(0); });
  }

  Id exp(Id a) {
    Tensor<T> y = val(a);
    for (T& v : y.data) v = std::exp(v);
    return unary(a, std::move(y), [](T yv, T) { return yv; });
  }

  // y = s * x + o, elementwise with scalar constants.
  Id affine(Id a, T s, T o) {
    Tensor<T> y = val(a);
    for (T& v : y.data) v = s * v + o;
    return unary(a, std::move(y), [s](T, T) { return s; });
  }

  Id neg(Id a) { return affine(a, T(-1), T(0)); }
  Id scale(Id a, T s) { return affine(a, s, T(0)); }

  // ---- structured ops ----------------------------------------------------

  // Per-pixel channel softmax with max subtraction.
  Id softmax_channels(Id a) {
    const Tensor<T>& x = val(a);
    require(x.rank() == 3 && x.shape[2] >= 1, "softmax_channels: input must be H x W x C, got " + shape_to_string(x.shape));
    const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
    Tensor<T> y({h, w, c});
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const T* xp = &x.at(i, j, 0);
        T* yp = &y.at(i, j, 0);
        T mx = xp[0];
        for (int k = 1; k < c; ++k) mx = std::max(mx, xp[k]);
        T sum = 0;
        for (int k = 0; k < c; ++k) {
          yp[k] = std::exp(xp[k] - mx);
          sum += yp[k];
        }
        for (int k = 0; k < c; ++k) yp[k] /= sum;
      }
    nodes_.push_back(Node{std::move(y), [a](Tape& t, Id self) {
                            const Tensor<T>& p = t.val(self);
                            const Tensor<T>& g = t.grads_[self];
                            Tensor<T> gx;
                            gx.shape = p.shape;
                            gx.data.assign(p.data.size(), T(0));
                            const int h = p.shape[0], w = p.shape[1], c = p.shape[2];
                            for (int i = 0; i < h; ++i)
                              for (int j = 0; j < w; ++j) {
                                const T* pp = &p.at(i, j, 0);
                                const T* gp = &g.at(i, j, 0);
                                T dot = 0;
                                for (int k = 0; k < c; ++k) dot += gp[k] * pp[k];
                                T* gxp = &gx.at(i, j, 0);
                                for (int k = 0; k < c; ++k) gxp[k] = pp[k] * (gp[k] - dot);
                              }
                            t.accum(a, gx);
                          }});
    return static_cast<Id>(nodes_.size()) - 1;
  }

  // Cross-correlation with "same" zero padding; b < 0 means no bias.
  Id conv2d(Id x, Id w, Id b, int dilation) {
    const Tensor<T>* bias = b >= 0 ? &val(b) : nullptr;
    Tensor<T> y = conv2d_forward(val(x), val(w), bias, dilation);
    nodes_.push_back(Node{std::move(y), [x, w, b, dilation](Tape& t, Id self) {
                            const Tensor<T>& g = t.grads_[self];
                            const Tensor<T>& xv = t.val(x);
                            const Tensor<T>& wv = t.val(w);
                            Tensor<T> gx(xv.shape), gw(wv.shape);
                            Tensor<T> gb;
                            if (b >= 0) gb = Tensor<T>(t.val(b).shape);
                            conv2d_backward(xv, wv, dilation, g, &gx, &gw, b >= 0 ? &gb : nullptr);
                            t.accum(x, gx);
                            t.accum(w, gw);
                            if (b >= 0) t.accum(b, gb);
                          }});
    return static_cast<Id>(nodes_.size()) - 1;
  }

  // Bilinear backward warp; differentiable in both the source and the flow.
  Id warp(Id x, Id f) {
    Tensor<T> y = warp_bilinear(val(x), val(f));
    nodes_.push_back(Node{std::move(y), [x, f](Tape& t, Id self) {
                            const Tensor<T>& g = t.grads_[self];
                            const Tensor<T>& xv = t.val(x);
                            const Tensor<T>& fv = t.val(f);
                            Tensor<T> gx(xv.shape), gf(fv.shape);
                            warp_backward(g, xv, fv, &gx, &gf);
                            t.accum(x, gx);
                            t.accum(f, gf);
                          }});
    return static_cast<Id>(nodes_.size()) - 1;
  }

  // Sum of all elements -> scalar.
  Id sum(Id a) {
    T acc = 0;
    for (T v : val(a).data) acc += v;
    nodes_.push_back(Node{Tensor<T>::scalar(acc), [a](Tape& t, Id self) {
                            const T g = t.grads_[self].data[0];
                            Tensor<T> gx;
                            gx.shape = t.val(a).shape;
                            gx.data.assign(t.val(a).size(), g);
                            t.accum(a, gx);
                          }});
    return static_cast<Id>(nodes_.size()) - 1;
  }

  // Unnormalized negative log-likelihood over non-ignore pixels. `probs` is
  // H x W x C of class probabilities; log is floored at 1e-12.
  Id nll_loss(Id probs, const LabelMap& labels) {
    static constexpr double kFloor = 1e-12;
    const Tensor<T>& p = val(probs);
    require(p.rank() == 3, "nll_loss: probs must be H x W x C, got " + shape_to_string(p.shape));
    require(p.shape[0] == labels.h && p.shape[1] == labels.w,
            "nll_loss: label map " + std::to_string(labels.h) + "x" + std::to_string(labels.w) +
                " does not match probs " + shape_to_string(p.shape));
    const int c = p.shape[2];
    T loss = 0;
    for (int i = 0; i < labels.h; ++i)
      for (int j = 0; j < labels.w; ++j) {
        const int lab = labels.at(i, j);
        if (lab == LabelMap::kIgnore) continue;
        require(lab >= 0 && lab < c, "nll_loss: label " + std::to_string(lab) + " out of range for C=" + std::to_string(c));
        loss -= std::log(std::max(static_cast<double>(p.at(i, j, lab)), kFloor));
      }
    LabelMap lab_copy = labels;
    nodes_.push_back(Node{Tensor<T>::scalar(loss), [probs, lab_copy](Tape& t, Id self) {
                            const T g = t.grads_[self].data[0];
                            const Tensor<T>& p = t.val(probs);
                            Tensor<T> gp;
                            gp.shape = p.shape;
                            gp.data.assign(p.data.size(), T(0));
                            for (int i = 0; i < lab_copy.h; ++i)
                              for (int j = 0; j < lab_copy.w; ++j) {
                                const int lab = lab_copy.at(i, j);
                                if (lab == LabelMap::kIgnore) continue;
                                const T pv = p.at(i, j, lab);
                                if (static_cast<double>(pv) > kFloor) gp.at(i, j, lab) -= g / pv;
                              }
                            t.accum(probs, gp);
                          }});
    return static_cast<Id>(nodes_.size()) - 1;
  }

 private:
  enum class BinOp { Add, Sub, Mul };
  // Broadcast forms: equal shapes, a rank-0 scalar against anything, or a
  // single-channel H x W x 1 map against H x W x C.
  enum class Bcast { None, LeftScalar, RightScalar, LeftChan, RightChan };

  struct Node {
    Tensor<T> value;
    std::function<void(Tape&, Id)> back;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;

  void accum(Id id, const Tensor<T>& g) {
    Tensor<T>& slot = grads_[id];
    if (slot.data.empty()) {
      slot = g;
      return;
    }
    for (std::size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += g.data[i];
  }

  static Bcast classify(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape == b.shape) return Bcast::None;
    if (a.is_scalar()) return Bcast::LeftScalar;
    if (b.is_scalar()) return Bcast::RightScalar;
    if (a.rank() == 3 && b.rank() == 3 && a.shape[0] == b.shape[0] && a.shape[1] == b.shape[1]) {
      if (a.shape[2] == 1 && b.shape[2] > 1) return Bcast::LeftChan;
      if (b.shape[2] == 1 && a.shape[2] > 1) return Bcast::RightChan;
    }
    throw ContractViolation("elementwise op: incompatible shapes " + shape_to_string(a.shape) + " and " +
                            shape_to_string(b.shape));
  }

  // Value of operand `t` broadcast to flat index `i` of the result.
  static T fetch(const Tensor<T>& t, Bcast k, bool left, std::size_t i, int c_out) {
    const bool bcast = (left && (k == Bcast::LeftScalar || k == Bcast::LeftChan)) ||
                       (!left && (k == Bcast::RightScalar || k == Bcast::RightChan));
    if (!bcast) return t.data[i];
    if (t.is_scalar()) return t.data[0];
    return t.data[i / static_cast<std::size_t>(c_out)];  // H x W x 1 against H x W x C
  }

  // Reduce a full-shape gradient down to a broadcast operand's shape.
  static Tensor<T> reduce_to(const Tensor<T>& g, const Tensor<T>& operand, int c_out) {
    Tensor<T> r;
    r.shape = operand.shape;
    r.data.assign(operand.data.size(), T(0));
    if (operand.is_scalar()) {
      T acc = 0;
      for (T v : g.data) acc += v;
      r.data[0] = acc;
    } else {
      for (std::size_t i = 0; i < g.data.size(); ++i) r.data[i / static_cast<std::size_t>(c_out)] += g.data[i];
    }
    return r;
  }

  Id binary(Id a, Id b, BinOp op) {
    const Tensor<T>& av = val(a);
    const Tensor<T>& bv = val(b);
    const Bcast k = classify(av, bv);
    const Tensor<T>& big = (k == Bcast::LeftScalar || k == Bcast::LeftChan) ? bv : av;
    const int c_out = big.rank() == 3 ? big.shape[2] : 1;
    Tensor<T> y;
    y.shape = big.shape;
    y.data.resize(big.data.size());
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      const T x1 = fetch(av, k, true, i, c_out);
      const T x2 = fetch(bv, k, false, i, c_out);
      y.data[i] = op == BinOp::Add ? x1 + x2 : (op == BinOp::Sub ? x1 - x2 : x1 * x2);
    }
    nodes_.push_back(Node{std::move(y), [a, b, op, k, c_out](Tape& t, Id self) {
                            const Tensor<T>& g = t.grads_[self];
                            const Tensor<T>& av = t.val(a);
                            const Tensor<T>& bv = t.val(b);
                            Tensor<T> ga, gb;
                            ga.shape = g.shape;
                            ga.data.resize(g.data.size());
                            gb.shape = g.shape;
                            gb.data.resize(g.data.size());
                            for (std::size_t i = 0; i < g.data.size(); ++i) {
                              const T gv = g.data[i];
                              switch (op) {
                                case BinOp::Add:
                                  ga.data[i] = gv;
                                  gb.data[i] = gv;
                                  break;
                                case BinOp::Sub:
                                  ga.data[i] = gv;
                                  gb.data[i] = -gv;
                                  break;
                                case BinOp::Mul:
                                  ga.data[i] = gv * fetch(bv, k, false, i, c_out);
                                  gb.data[i] = gv * fetch(av, k, true, i, c_out);
                                  break;
                              }
                            }
                            if (k == Bcast::LeftScalar || k == Bcast::LeftChan)
                              t.accum(a, reduce_to(ga, av, c_out));
                            else
                              t.accum(a, ga);
                            if (k == Bcast::RightScalar || k == Bcast::RightChan)
                              t.accum(b, reduce_to(gb, bv, c_out));
                            else
                              t.accum(b, gb);
                          }});
    return static_cast<Id>(nodes_.size()) - 1;
  }

  template <class DFn>
  Id unary(Id a, Tensor<T> y, DFn dfn) {
    nodes_.push_back(Node{std::move(y), [a, dfn](Tape& t, Id self) {
                            const Tensor<T>& g = t.grads_[self];
                            const Tensor<T>& yv = t.nodes_[self].value;
                            const Tensor<T>& xv = t.val(a);
                            Tensor<T> gx;
                            gx.shape = xv.shape;
                            gx.data.resize(xv.data.size());
                            for (std::size_t i = 0; i < gx.data.size(); ++i)
                              gx.data[i] = g.data[i] * dfn(yv.data[i], xv.data[i]);
                            t.accum(a, gx);
                          }});
    return static_cast<Id>(nodes_.size()) - 1;
  }
};

}  // namespace grfp
