#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace grfp {

// Raised when an operation's preconditions are violated.
class ContractViolation : public std::runtime_error {
 public:
  explicit ContractViolation(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised on malformed files (bad magic, truncation, wrong rank, ...).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_to_string(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// Dense n-dimensional array, row-major with channels innermost.
// Rank <= 4; images and feature maps are H x W x C.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(count(shape), fill);
  }

  static Tensor scalar(T v) {
    Tensor t;
    t.data.assign(1, v);
    return t;
  }

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int e : s) {
      if (e <= 0) throw ContractViolation("tensor extent must be positive, got shape " + shape_to_string(s));
      n *= static_cast<std::size_t>(e);
    }
    return n;
  }

  int rank() const { return static_cast<int>(shape.size()); }
  std::size_t size() const { return data.size(); }
  bool is_scalar() const { return shape.empty(); }

  int height() const { return shape.at(0); }
  int width() const { return shape.at(1); }
  int channels() const { return rank() == 3 ? shape[2] : 1; }

  T& at(int i, int j, int c) { return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + c]; }
  const T& at(int i, int j, int c) const {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + c];
  }
  T& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
  const T& at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ContractViolation(msg);
}

// Per-pixel integer class ids; 255 marks pixels excluded from losses and metrics.
struct LabelMap {
  static constexpr int kIgnore = 255;
  int h = 0, w = 0;
  std::vector<int> ids;

  LabelMap() = default;
  LabelMap(int height, int width, int fill = 0) : h(height), w(width), ids(static_cast<std::size_t>(height) * width, fill) {}

  int& at(int i, int j) { return ids[static_cast<std::size_t>(i) * w + j]; }
  int at(int i, int j) const { return ids[static_cast<std::size_t>(i) * w + j]; }
};

}  // namespace grfp
