#pragma once

#include <string>

#include "rs2/metrics.hpp"
#include "rs2/tensor.hpp"

namespace rs2 {

// Binary PPM (P6) round-trip for [H,W,3] images with values in [0,1].
// Writing quantizes to bytes (round-to-nearest, clamped); reading maps byte
// k to k/255, so byte-quantized tensors survive a round trip bit-exactly.
void write_ppm(const std::string& path, const Tensor<double>& image);
Tensor<double> read_ppm(const std::string& path);

// Binary PGM (P5) with values 0/255 for binary masks.
void write_pgm(const std::string& path, const Mask& mask);
Mask read_pgm(const std::string& path);

} // namespace rs2
