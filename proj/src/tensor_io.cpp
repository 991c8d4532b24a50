#include "grfp/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace grfp {

namespace {

// All fields little-endian; this code assumes a little-endian host.

template <class T>
void write_tensor(const Tensor<T>& t, const std::string& path, std::uint8_t dtype) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for write: " + path);
  out.write(kTensorMagic, 8);
  out.put(static_cast<char>(kTensorVersion));
  out.put(static_cast<char>(dtype));
  out.put(static_cast<char>(t.rank()));
  for (int e : t.shape) {
    const std::uint32_t v = static_cast<std::uint32_t>(e);
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!out) throw FormatError("short write: " + path);
}

struct Header {
  std::uint8_t dtype = 0;
  std::vector<int> shape;
  std::size_t payload_offset = 0;
};

Header read_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kTensorMagic, 8) != 0)
    throw FormatError(path + ": bad magic at offset 0 (not a GRFPTNSR container)");
  int version = in.get();
  if (version != kTensorVersion)
    throw FormatError(path + ": unsupported format version " + std::to_string(version) + " at offset 8");
  int dtype = in.get();
  if (dtype != 0 && dtype != 1) throw FormatError(path + ": unknown dtype code " + std::to_string(dtype) + " at offset 9");
  int rank = in.get();
  if (rank < 0 || rank > 4) throw FormatError(path + ": rank " + std::to_string(rank) + " out of range at offset 10");
  Header h;
  h.dtype = static_cast<std::uint8_t>(dtype);
  for (int i = 0; i < rank; ++i) {
    std::uint32_t e = 0;
    in.read(reinterpret_cast<char*>(&e), 4);
    if (in.gcount() != 4) throw FormatError(path + ": truncated extents at offset " + std::to_string(11 + 4 * i));
    h.shape.push_back(static_cast<int>(e));
  }
  h.payload_offset = 11 + 4 * static_cast<std::size_t>(rank);
  return h;
}

template <class T>
Tensor<T> read_payload_as(std::ifstream& in, const Header& h, const std::string& path) {
  Tensor<T> t;
  t.shape = h.shape;
  t.data.resize(Tensor<T>::count(h.shape));
  if (h.dtype == 0) {
    std::vector<float> raw(t.data.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (static_cast<std::size_t>(in.gcount()) != raw.size() * 4)
      throw FormatError(path + ": truncated payload at offset " + std::to_string(h.payload_offset + in.gcount()));
    std::copy(raw.begin(), raw.end(), t.data.begin());
  } else {
    std::vector<double> raw(t.data.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 8));
    if (static_cast<std::size_t>(in.gcount()) != raw.size() * 8)
      throw FormatError(path + ": truncated payload at offset " + std::to_string(h.payload_offset + in.gcount()));
    std::copy(raw.begin(), raw.end(), t.data.begin());
  }
  return t;
}

template <class T>
Tensor<T> read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path);
  Header h = read_header(in, path);
  return read_payload_as<T>(in, h, path);
}

std::uint8_t clamp_byte(float v) {
  const float s = v * 255.0f + 0.5f;
  return static_cast<std::uint8_t>(std::min(255.0f, std::max(0.0f, s)));
}

}  // namespace

void save_tensor(const Tensor<float>& t, const std::string& path) { write_tensor(t, path, 0); }
void save_tensor(const Tensor<double>& t, const std::string& path) { write_tensor(t, path, 1); }
Tensor<float> load_tensor(const std::string& path) { return read_tensor<float>(path); }
Tensor<double> load_tensor_f64(const std::string& path) { return read_tensor<double>(path); }

void save_ppm(const Tensor<float>& image, const std::string& path) {
  require(image.rank() == 3 && image.shape[2] == 3, "save_ppm: image must be H x W x 3, got " + shape_to_string(image.shape));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for write: " + path);
  out << "P6\n" << image.shape[1] << ' ' << image.shape[0] << "\n255\n";
  for (float v : image.data) out.put(static_cast<char>(clamp_byte(v)));
}

void save_pgm(const LabelMap& labels, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for write: " + path);
  out << "P5\n" << labels.w << ' ' << labels.h << "\n255\n";
  for (int v : labels.ids) out.put(static_cast<char>(std::min(255, std::max(0, v))));
}

void save_label_overlay(const LabelMap& labels, const std::string& path) {
  static const std::array<std::array<std::uint8_t, 3>, 8> palette = {{{40, 40, 40},
                                                                      {220, 60, 50},
                                                                      {70, 160, 60},
                                                                      {60, 90, 200},
                                                                      {230, 200, 50},
                                                                      {170, 70, 180},
                                                                      {70, 200, 200},
                                                                      {240, 140, 50}}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for write: " + path);
  out << "P6\n" << labels.w << ' ' << labels.h << "\n255\n";
  for (int v : labels.ids) {
    const auto& c = v == LabelMap::kIgnore ? std::array<std::uint8_t, 3>{255, 255, 255} : palette[v % palette.size()];
    out.put(static_cast<char>(c[0]));
    out.put(static_cast<char>(c[1]));
    out.put(static_cast<char>(c[2]));
  }
}

}  // namespace grfp
