#pragma once

#include <string>

#include "locrank/tensor.hpp"

namespace locrank {

// Binary PGM (P5) and PPM (P6), 8-bit, maxval 255. Pixels decode to
// doubles in [0,1] (value/255); encoding rounds back, so a read/write
// round-trip reproduces the file byte for byte.
Tensor read_image(const std::string& path);
void write_image(const std::string& path, const Tensor& image);

// In-memory variants (used by tests and the visualizers).
Tensor decode_netpbm(const std::string& bytes, const std::string& name);
std::string encode_netpbm(const Tensor& image);

}  // namespace locrank
