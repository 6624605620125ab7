#pragma once

#include <string>
#include <vector>

#include "alf/image.hpp"
#include "alf/tensor.hpp"

namespace alf {

// Fixed seed of the random-feature perceptual proxy; recorded in result files
// so scores are comparable across runs.
constexpr std::uint64_t kPdistSeed = 7177;

// 10*log10(peak^2 / MSE), capped at 100 dB (returned for identical inputs).
double psnr(const Image& a, const Image& b, double peak = 1.0);

// Single-scale SSIM, 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03,
// computed on luma (ITU-R 601) for RGB inputs. Throws if smaller than the window.
double ssim(const Image& a, const Image& b);

// Perceptual distance proxy: both inputs pass through a fixed seed-determined
// 3-stage strided conv stack (16/32/64 channels); per stage the features are
// channel-normalized and the mean squared difference accumulated.
// Differentiable w.r.t. both inputs when called under a tape.
Tensor pdist_graph(const Tensor& a, const Tensor& b);
double pdist(const Image& a, const Image& b);

struct RDPoint {
    std::string label;
    double beta = 0.0;
    double tau = 0.0;
    double bpp = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double pdist = 0.0;
    std::uint64_t seed = 0;
};

struct RDCurve {
    std::string label;
    std::vector<RDPoint> points;  // sorted by bpp, strictly increasing
};

// Classic Bjontegaard delta rate: cubic fit of log-rate as a function of the
// chosen quality field ("psnr" or "pdist"), integrated over the overlapping
// quality interval. Negative = test saves rate. Needs >= 4 points per curve.
double bd_rate(const RDCurve& anchor, const RDCurve& test, const std::string& quality_field);

}  // namespace alf
