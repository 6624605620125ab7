#pragma once

#include <string>

#include "alf/tensor.hpp"

namespace alf {

// Planar CHW float image in [0,1]; 1 (grayscale) or 3 (RGB) channels.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;  // CHW

    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    Tensor to_tensor() const;              // [1,C,H,W]
    static Image from_tensor(const Tensor& t, bool clamp = true);  // [1,C,H,W] or [C,H,W]
};

// PNG (8-bit gray or RGB) and binary PPM/PGM. Format chosen by file content
// on read and by extension on write (.png vs .ppm/.pgm).
Image read_image(const std::string& path);
void write_image(const std::string& path, const Image& img);

}  // namespace alf
