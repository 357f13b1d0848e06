#include "vbs/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace vbs {

namespace {
unsigned char quantize(double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_p6(const std::string& path, std::int64_t w, std::int64_t h,
              const std::vector<unsigned char>& rgb) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open pixmap for writing: " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!out) throw DataError("pixmap write failed: " + path);
}
}  // namespace

void write_ppm(const TensorPtr& image, const std::string& path) {
    if (image->shape.size() != 3 || image->shape[0] != 3)
        throw ConfigError("write_ppm: expected [3 x H x W], got " + shape_str(image->shape));
    const std::int64_t h = image->shape[1], w = image->shape[2];
    std::vector<unsigned char> rgb(static_cast<std::size_t>(3 * h * w));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                rgb[(y * w + x) * 3 + c] = quantize(image->values[(c * h + y) * w + x]);
    write_p6(path, w, h, rgb);
}

void write_ppm_gray(const TensorPtr& map, const std::string& path) {
    if (map->shape.size() != 2)
        throw ConfigError("write_ppm_gray: expected [H x W], got " + shape_str(map->shape));
    const std::int64_t h = map->shape[0], w = map->shape[1];
    std::vector<unsigned char> rgb(static_cast<std::size_t>(3 * h * w));
    for (std::int64_t i = 0; i < h * w; ++i) {
        const unsigned char g = quantize(map->values[i]);
        rgb[i * 3] = rgb[i * 3 + 1] = rgb[i * 3 + 2] = g;
    }
    write_p6(path, w, h, rgb);
}

}  // namespace vbs
