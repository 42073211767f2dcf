#pragma once

#include <filesystem>
#include <string>

#include "brightvae/tensor.hpp"

namespace brightvae {

/// Reads an 8-bit PNG as a (3, H, W) tensor in [0, 1]. Grayscale and alpha
/// inputs are expanded/stripped to RGB.
Tensor<double> read_png(const std::filesystem::path& path);

/// Writes a (3, H, W) tensor in [0, 1] as an 8-bit RGB PNG (values are
/// clamped and quantized to the 255-level grid).
void write_png(const std::filesystem::path& path, const Tensor<double>& image);

/// Quantizes values to the 8-bit grid k/255 so PNG round trips are lossless.
Tensor<double> quantize_to_8bit(const Tensor<double>& image);

}  // namespace brightvae
