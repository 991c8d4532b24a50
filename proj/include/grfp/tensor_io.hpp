#pragma once

#include <string>

#include "grfp/tensor.hpp"

namespace grfp {

// Binary tensor container shared by all modules.
//   magic "GRFPTNSR" | version u8 | dtype u8 (0=f32, 1=f64) | rank u8
//   | extents u32 LE | raw values LE, row-major, channels innermost.
inline constexpr char kTensorMagic[8] = {'G', 'R', 'F', 'P', 'T', 'N', 'S', 'R'};
inline constexpr std::uint8_t kTensorVersion = 1;

void save_tensor(const Tensor<float>& t, const std::string& path);
void save_tensor(const Tensor<double>& t, const std::string& path);

// Loads either dtype, converting to float. Throws FormatError (with the byte
// offset of the problem) on bad magic, bad version, or truncation.
Tensor<float> load_tensor(const std::string& path);
Tensor<double> load_tensor_f64(const std::string& path);

// 8-bit binary PPM (P6) of an H x W x 3 image with values in [0, 1].
void save_ppm(const Tensor<float>& image, const std::string& path);
// 8-bit binary PGM (P5) of a label map; class ids as gray levels.
void save_pgm(const LabelMap& labels, const std::string& path);
// PPM render of a label map through a fixed class palette.
void save_label_overlay(const LabelMap& labels, const std::string& path);

}  // namespace grfp
