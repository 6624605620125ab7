#include "alf/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "alf/nn.hpp"
#include "alf/ops.hpp"
#include "alf/rng.hpp"

namespace alf {

namespace {

double image_mse(const Image& a, const Image& b) {
    if (a.channels != b.channels || a.height != b.height || a.width != b.width)
        throw ShapeError("metric inputs differ in shape");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

std::vector<double> to_luma(const Image& img) {
    std::vector<double> y(static_cast<std::size_t>(img.height) * img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            std::size_t i = static_cast<std::size_t>(r) * img.width + c;
            if (img.channels == 1)
                y[i] = img.at(0, r, c);
            else
                y[i] = 0.299 * img.at(0, r, c) + 0.587 * img.at(1, r, c) + 0.114 * img.at(2, r, c);
        }
    return y;
}

}  // namespace

double psnr(const Image& a, const Image& b, double peak) {
    double mse = image_mse(a, b);
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Image& a, const Image& b) {
    if (a.channels != b.channels || a.height != b.height || a.width != b.width)
        throw ShapeError("ssim inputs differ in shape");
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    if (a.height < kWin || a.width < kWin) throw ShapeError("ssim: image smaller than 11x11 window");

    std::array<double, kWin> g{};
    double gsum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        double d = i - (kWin - 1) / 2.0;
        g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        gsum += g[static_cast<std::size_t>(i)];
    }
    for (double& v : g) v /= gsum;

    std::vector<double> xa = to_luma(a), xb = to_luma(b);
    const int H = a.height, W = a.width;
    constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;  // peak = 1.0

    // separable Gaussian over valid windows
    auto filter = [&](const std::vector<double>& src) {
        std::vector<double> tmp(static_cast<std::size_t>(H) * (W - kWin + 1));
        for (int r = 0; r < H; ++r)
            for (int c = 0; c + kWin <= W; ++c) {
                double s = 0.0;
                for (int k = 0; k < kWin; ++k) s += g[static_cast<std::size_t>(k)] * src[static_cast<std::size_t>(r) * W + c + k];
                tmp[static_cast<std::size_t>(r) * (W - kWin + 1) + c] = s;
            }
        std::vector<double> out(static_cast<std::size_t>(H - kWin + 1) * (W - kWin + 1));
        for (int r = 0; r + kWin <= H; ++r)
            for (int c = 0; c < W - kWin + 1; ++c) {
                double s = 0.0;
                for (int k = 0; k < kWin; ++k)
                    s += g[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(r + k) * (W - kWin + 1) + c];
                out[static_cast<std::size_t>(r) * (W - kWin + 1) + c] = s;
            }
        return out;
    };

    auto mul_img = [&](const std::vector<double>& u, const std::vector<double>& v) {
        std::vector<double> out(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] * v[i];
        return out;
    };

    auto mu_a = filter(xa), mu_b = filter(xb);
    auto e_aa = filter(mul_img(xa, xa)), e_bb = filter(mul_img(xb, xb)), e_ab = filter(mul_img(xa, xb));

    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        double va = e_aa[i] - mu_a[i] * mu_a[i];
        double vb = e_bb[i] - mu_b[i] * mu_b[i];
        double cov = e_ab[i] - mu_a[i] * mu_b[i];
        double num = (2.0 * mu_a[i] * mu_b[i] + C1) * (2.0 * cov + C2);
        double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + C1) * (va + vb + C2);
        acc += num / den;
    }
    return acc / static_cast<double>(mu_a.size());
}

namespace {

struct PdistNet {
    std::vector<nn::Conv2d> stages;
};

// Proxy weights are fixed per input channel count and shared process-wide.
const PdistNet& pdist_net(int in_channels) {
    static std::map<int, PdistNet> cache;
    auto it = cache.find(in_channels);
    if (it != cache.end()) return it->second;
    Rng rng = Rng::derive(kPdistSeed, static_cast<std::uint64_t>(in_channels));
    PdistNet net;
    const int chans[3] = {16, 32, 64};
    int prev = in_channels;
    for (int s = 0; s < 3; ++s) {
        net.stages.push_back(nn::Conv2d::create(prev, chans[s], 3, 2, 1, rng));
        prev = chans[s];
    }
    return cache.emplace(in_channels, std::move(net)).first->second;
}

}  // namespace

Tensor pdist_graph(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("pdist inputs differ in shape");
    if (a.rank() != 4) throw ShapeError("pdist expects NCHW");
    const PdistNet& net = pdist_net(a.dim(1));
    Tensor fa = a, fb = b;
    Tensor total = Tensor::scalar(0.0f);
    for (const auto& conv : net.stages) {
        fa = ops::leaky_relu(conv.forward(fa));
        fb = ops::leaky_relu(conv.forward(fb));
        Tensor na = ops::channel_l2_normalize(fa);
        Tensor nb = ops::channel_l2_normalize(fb);
        total = ops::add(total, ops::mse(na, nb));
    }
    return total;
}

double pdist(const Image& a, const Image& b) {
    NoGradScope ng;
    return static_cast<double>(pdist_graph(a.to_tensor(), b.to_tensor()).item());
}

namespace {

std::vector<std::pair<double, double>> quality_lograte(const RDCurve& c, const std::string& field) {
    std::vector<std::pair<double, double>> out;
    double prev_bpp = 0.0;
    for (const RDPoint& p : c.points) {
        if (!(p.bpp > prev_bpp)) throw ConfigError("bd_rate: bpp must be strictly increasing (" + c.label + ")");
        prev_bpp = p.bpp;
        double q;
        if (field == "psnr")
            q = p.psnr_db;
        else if (field == "ssim")
            q = p.ssim;
        else if (field == "pdist")
            q = p.pdist;
        else
            throw ConfigError("bd_rate: unknown quality field '" + field + "'");
        out.emplace_back(q, std::log(p.bpp));
    }
    if (out.size() < 4) throw ConfigError("bd_rate: need >= 4 points per curve (" + c.label + ")");
    // quality must be monotone in rate (either direction)
    bool inc = true, dec = true;
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (!(out[i].first > out[i - 1].first)) inc = false;
        if (!(out[i].first < out[i - 1].first)) dec = false;
    }
    if (!inc && !dec) throw ConfigError("bd_rate: quality not monotone along the curve (" + c.label + ")");
    return out;
}

// Least-squares cubic in centered/scaled quality; returns coefficients plus
// the affine map q -> u used for conditioning.
struct CubicFit {
    std::array<double, 4> coef{};
    double mid = 0.0, half = 1.0;

    double eval(double q) const {
        double u = (q - mid) / half;
        return ((coef[3] * u + coef[2]) * u + coef[1]) * u + coef[0];
    }
    // antiderivative evaluated at q (in u units times half)
    double integral(double qa, double qb) const {
        auto anti = [&](double q) {
            double u = (q - mid) / half;
            return half * (coef[0] * u + coef[1] * u * u / 2.0 + coef[2] * u * u * u / 3.0 +
                           coef[3] * u * u * u * u / 4.0);
        };
        return anti(qb) - anti(qa);
    }
};

CubicFit fit_cubic(const std::vector<std::pair<double, double>>& pts) {
    double qmin = pts[0].first, qmax = pts[0].first;
    for (const auto& [q, r] : pts) {
        qmin = std::min(qmin, q);
        qmax = std::max(qmax, q);
    }
    CubicFit fit;
    fit.mid = (qmin + qmax) / 2.0;
    fit.half = (qmax - qmin) / 2.0;
    if (!(fit.half > 0.0)) throw ConfigError("bd_rate: degenerate quality range");

    // distinct quality count gate (singular cubic otherwise)
    std::vector<double> qs;
    for (const auto& [q, r] : pts) qs.push_back(q);
    std::sort(qs.begin(), qs.end());
    qs.erase(std::unique(qs.begin(), qs.end()), qs.end());
    if (qs.size() < 4) throw ConfigError("bd_rate: fewer than 4 distinct quality values");

    // normal equations A^T A c = A^T y for the cubic Vandermonde system
    double ata[4][4] = {};
    double aty[4] = {};
    for (const auto& [q, r] : pts) {
        double u = (q - fit.mid) / fit.half;
        double row[4] = {1.0, u, u * u, u * u * u};
        for (int i = 0; i < 4; ++i) {
            aty[i] += row[i] * r;
            for (int j = 0; j < 4; ++j) ata[i][j] += row[i] * row[j];
        }
    }
    // Gaussian elimination with partial pivoting
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r2 = col + 1; r2 < 4; ++r2)
            if (std::abs(ata[r2][col]) > std::abs(ata[piv][col])) piv = r2;
        if (std::abs(ata[piv][col]) < 1e-12) throw ConfigError("bd_rate: singular fit");
        std::swap(ata[col], ata[piv]);
        std::swap(aty[col], aty[piv]);
        for (int r2 = col + 1; r2 < 4; ++r2) {
            double f = ata[r2][col] / ata[col][col];
            for (int c2 = col; c2 < 4; ++c2) ata[r2][c2] -= f * ata[col][c2];
            aty[r2] -= f * aty[col];
        }
    }
    for (int i = 3; i >= 0; --i) {
        double s = aty[i];
        for (int j = i + 1; j < 4; ++j) s -= ata[i][j] * fit.coef[static_cast<std::size_t>(j)];
        fit.coef[static_cast<std::size_t>(i)] = s / ata[i][i];
    }
    return fit;
}

}  // namespace

double bd_rate(const RDCurve& anchor, const RDCurve& test, const std::string& quality_field) {
    auto pa = quality_lograte(anchor, quality_field);
    auto pt = quality_lograte(test, quality_field);
    auto qrange = [](const std::vector<std::pair<double, double>>& v) {
        double lo = v[0].first, hi = v[0].first;
        for (const auto& [q, r] : v) {
            lo = std::min(lo, q);
            hi = std::max(hi, q);
        }
        return std::pair<double, double>(lo, hi);
    };
    auto [alo, ahi] = qrange(pa);
    auto [tlo, thi] = qrange(pt);
    double lo = std::max(alo, tlo), hi = std::min(ahi, thi);
    if (!(hi > lo)) throw ConfigError("bd_rate: quality ranges do not overlap");
    CubicFit fa = fit_cubic(pa);
    CubicFit ft = fit_cubic(pt);
    double mean_diff = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    return 100.0 * (std::exp(mean_diff) - 1.0);
}

}  // namespace alf
