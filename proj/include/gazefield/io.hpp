#pragma once

#include <string>

#include "gazefield/tensor.hpp"

namespace gazefield {

// Images are [3,H,W] in [0,1]; masks are [H,W] in {0,1}. Written as binary
// PPM/PGM (lossless 8-bit). Depth maps are raw float32 with a 16-byte
// header: magic "GFDP", u32 version, u32 height, u32 width.

void write_ppm(const std::string& path, const Tensor<double>& image);
Tensor<double> read_ppm(const std::string& path);

void write_pgm(const std::string& path, const Tensor<double>& mask);
Tensor<double> read_pgm(const std::string& path);

void write_depth(const std::string& path, const Tensor<double>& depth);
Tensor<double> read_depth(const std::string& path);

}  // namespace gazefield
