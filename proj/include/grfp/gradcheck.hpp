#pragma once

#include <algorithm>
#include <vector>

#include "grfp/tape.hpp"

namespace grfp {

// Independent finite-difference check of tape gradients. `build` receives a
// fresh tape plus leaf ids for every input tensor and returns the scalar loss
// id. Returns the max over all input coordinates of
//   |analytic - central difference| / max(1, |central difference|).
// Meaningful in 64-bit only.
template <class T, class BuildFn>
double grad_check(const std::vector<Tensor<T>>& inputs, BuildFn&& build, T eps = T(1e-5)) {
  auto eval = [&](const std::vector<Tensor<T>>& in) {
    Tape<T> tape;
    std::vector<typename Tape<T>::Id> ids;
    ids.reserve(in.size());
    for (const auto& t : in) ids.push_back(tape.leaf(t));
    return static_cast<double>(tape.val(build(tape, ids)).data[0]);
  };

  Tape<T> tape;
  std::vector<typename Tape<T>::Id> ids;
  for (const auto& t : inputs) ids.push_back(tape.leaf(t));
  tape.backward(build(tape, ids));

  double max_rel = 0;
  std::vector<Tensor<T>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<T> analytic = tape.grad(ids[k]);
    for (std::size_t i = 0; i < probe[k].data.size(); ++i) {
      const T orig = probe[k].data[i];
      probe[k].data[i] = orig + eps;
      const double up = eval(probe);
      probe[k].data[i] = orig - eps;
      const double dn = eval(probe);
      probe[k].data[i] = orig;
      const double fd = (up - dn) / (2.0 * static_cast<double>(eps));
      const double rel = std::abs(static_cast<double>(analytic.data[i]) - fd) / std::max(1.0, std::abs(fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace grfp
