#pragma once

#include <string>

#include "vbs/tensor.hpp"

namespace vbs {

// Binary portable pixmap (P6, maxval 255). image is [3 x H x W] in [0,1].
void write_ppm(const TensorPtr& image, const std::string& path);

// Grayscale map [H x W] in [0,1] written as P6 with equal channels,
// pixel value round(255 * p).
void write_ppm_gray(const TensorPtr& map, const std::string& path);

}  // namespace vbs
