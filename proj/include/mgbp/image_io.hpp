#pragma once

#include <string>
#include <vector>

#include "mgbp/tensor.hpp"

namespace mgbp::imageio {

// 8-bit PNG in, (1, 3, H, W) tensor in [0, 255] out. Grayscale/palette/alpha
// inputs are expanded or stripped to RGB.
Tensor read_png(const std::string& path);

// Rounds half away from zero, clamps to [0, 255], writes 8-bit RGB.
void write_png(const Tensor& image, const std::string& path);

// Video cubes as directories of numbered PNG frames (sorted by filename).
Tensor read_frame_dir(const std::string& dir);                         // (1, 3, T, H, W)
void write_frame_dir(const Tensor& cube, const std::string& dir,
                     const std::string& prefix = "frame");

std::vector<std::string> list_pngs(const std::string& dir);

}  // namespace mgbp::imageio
