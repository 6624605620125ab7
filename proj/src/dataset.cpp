#include "alf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "alf/common.hpp"
#include "alf/rng.hpp"

namespace alf {

namespace {

namespace fs = std::filesystem;

Image blank(int size) {
    Image img;
    img.channels = 1;
    img.height = size;
    img.width = size;
    img.data.assign(static_cast<std::size_t>(size) * size, 0.0f);
    return img;
}

// Rescales to [0,1]; leaves a constant image at 0.5.
void normalize_range(Image& img) {
    auto [lo_it, hi_it] = std::minmax_element(img.data.begin(), img.data.end());
    float lo = *lo_it, hi = *hi_it;
    if (hi - lo < 1e-12f) {
        std::fill(img.data.begin(), img.data.end(), 0.5f);
        return;
    }
    for (float& v : img.data) v = (v - lo) / (hi - lo);
}

// White noise smoothed by a separable Gaussian of width `corr` (wrap-around
// borders keep the statistics uniform across the frame).
Image random_field(int size, double corr, Rng& rng) {
    Image img = blank(size);
    std::vector<float> noise(img.data.size());
    for (float& v : noise) v = static_cast<float>(rng.normal());

    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * corr)));
    std::vector<float> kernel(2 * radius + 1);
    float ksum = 0.0f;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = static_cast<float>(std::exp(-0.5 * (i * i) / (corr * corr)));
        ksum += kernel[i + radius];
    }
    for (float& k : kernel) k /= ksum;

    std::vector<float> tmp(noise.size());
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * noise[y * size + (((x + i) % size) + size) % size];
            tmp[y * size + x] = acc;
        }
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp[(((y + i) % size) + size) % size * size + x];
            img.data[y * size + x] = acc;
        }
    normalize_range(img);
    return img;
}

Image checkerboard(int size, Rng& rng) {
    Image img = blank(size);
    int cell = 1 << rng.below(4);  // 1, 2, 4 or 8 pixels
    float a = static_cast<float>(rng.uniform());
    float b = static_cast<float>(rng.uniform());
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            img.data[y * size + x] = (((x / cell) + (y / cell)) % 2 == 0) ? a : b;
    return img;
}

Image gradient(int size, Rng& rng) {
    Image img = blank(size);
    double angle = rng.uniform(0.0, 2.0 * M_PI);
    float lo = static_cast<float>(rng.uniform());
    float hi = static_cast<float>(rng.uniform());
    double gx = std::cos(angle), gy = std::sin(angle);
    double denom = std::max(1, size - 1);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double u = 0.5 + 0.5 * (gx * (x / denom - 0.5) + gy * (y / denom - 0.5)) / 0.5;
            u = std::clamp(u, 0.0, 1.0);
            img.data[y * size + x] = static_cast<float>(lo + (hi - lo) * u);
        }
    return img;
}

Image sinusoids(int size, Rng& rng) {
    Image img = blank(size);
    const int waves = 3;
    double fx[waves], fy[waves], ph[waves], amp[waves];
    for (int k = 0; k < waves; ++k) {
        fx[k] = rng.uniform(0.5, 6.0);
        fy[k] = rng.uniform(0.5, 6.0);
        ph[k] = rng.uniform(0.0, 2.0 * M_PI);
        amp[k] = rng.uniform(0.3, 1.0);
    }
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double v = 0.0;
            for (int k = 0; k < waves; ++k)
                v += amp[k] * std::sin(2.0 * M_PI * (fx[k] * x + fy[k] * y) / size + ph[k]);
            img.data[y * size + x] = static_cast<float>(v);
        }
    normalize_range(img);
    return img;
}

Image make_sample(std::uint64_t seed, int index, int size) {
    Rng rng = Rng::derive(seed, 0x0da7a5e7ULL, static_cast<std::uint64_t>(index));
    switch (index % 6) {
        case 0: return random_field(size, 1.0, rng);
        case 1: return random_field(size, 2.5, rng);
        case 2: return random_field(size, 5.0, rng);
        case 3: return checkerboard(size, rng);
        case 4: return gradient(size, rng);
        default: return sinusoids(size, rng);
    }
}

}  // namespace

std::vector<Image> make_dataset(std::uint64_t seed, int count, int size) {
    if (count < 0) throw ConfigError("dataset: count must be >= 0");
    if (size < 4) throw ConfigError("dataset: image size must be >= 4");
    std::vector<Image> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(make_sample(seed, i, size));
    return out;
}

std::vector<std::string> gen_dataset(std::uint64_t seed, int count, int size,
                                     const std::string& dir) {
    if (count < 0) throw ConfigError("dataset: count must be >= 0");
    if (size < 4) throw ConfigError("dataset: image size must be >= 4");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw IoError("cannot create dataset directory " + dir);
    std::vector<std::string> paths;
    paths.reserve(count);
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", i);
        std::string path = (fs::path(dir) / name).string();
        write_image(path, make_sample(seed, i, size));
        paths.push_back(path);
    }
    return paths;
}

std::vector<std::string> list_dataset(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir + " does not exist");
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".pgm" || ext == ".ppm") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    return paths;
}

std::vector<Image> load_dataset(const std::string& dir) {
    std::vector<Image> images;
    for (const auto& path : list_dataset(dir)) images.push_back(read_image(path));
    return images;
}

}  // namespace alf
