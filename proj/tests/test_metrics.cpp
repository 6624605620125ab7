#include <cmath>
#include <vector>

#include "alf/metrics.hpp"
#include "alf/rng.hpp"
#include "doctest.h"

using namespace alf;

namespace {

Image make_image(int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Image img;
    img.channels = c;
    img.height = h;
    img.width = w;
    img.data.resize(static_cast<std::size_t>(c) * h * w);
    for (float& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

// sinusoid superposition: smooth but textured, good blur-vs-noise material
Image textured_image(int n) {
    Image img;
    img.channels = 1;
    img.height = n;
    img.width = n;
    img.data.resize(static_cast<std::size_t>(n) * n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double v = 0.5 + 0.2 * std::sin(2.0 * M_PI * 3.0 * x / n) * std::cos(2.0 * M_PI * 2.0 * y / n) +
                       0.15 * std::sin(2.0 * M_PI * (5.0 * x + 4.0 * y) / n);
            img.at(0, y, x) = static_cast<float>(v);
        }
    return img;
}

double mse_of(const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

}  // namespace

TEST_CASE("psnr basics") {
    Image a = make_image(1, 8, 8, 11);
    CHECK(psnr(a, a) == doctest::Approx(100.0));

    // uniform offset of 0.1 -> MSE 0.01 -> 20 dB
    Image b = a;
    for (float& v : b.data) v += 0.1f;
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));

    Image c = make_image(1, 8, 9, 11);
    CHECK_THROWS_AS(psnr(a, c), ShapeError);
}

TEST_CASE("psnr matches scalar-loop oracle") {
    Image a = make_image(3, 7, 9, 21);
    Image b = make_image(3, 7, 9, 22);
    double mse = mse_of(a, b);
    double oracle = 10.0 * std::log10(1.0 / mse);
    CHECK(psnr(a, b) == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("psnr decreases with noise amplitude") {
    Image x = textured_image(24);
    Rng rng(5);
    std::vector<float> noise(x.data.size());
    for (float& v : noise) v = static_cast<float>(rng.normal());
    double prev = 1e9;
    for (double amp : {0.01, 0.02, 0.05, 0.1}) {
        Image y = x;
        for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += static_cast<float>(amp) * noise[i];
        double p = psnr(x, y);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim identity, symmetry, inversion") {
    Image a = make_image(1, 16, 16, 31);
    CHECK(ssim(a, a) == doctest::Approx(1.0));

    Image b = make_image(1, 16, 16, 32);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-9));

    // binary checkerboard with no mid-gray: inverted copy scores low
    Image bin;
    bin.channels = 1;
    bin.height = 16;
    bin.width = 16;
    bin.data.resize(256);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) bin.at(0, y, x) = ((x / 4 + y / 4) % 2) ? 1.0f : 0.0f;
    Image inv = bin;
    for (float& v : inv.data) v = 1.0f - v;
    CHECK(ssim(bin, inv) < 0.5);

    Image tiny = make_image(1, 8, 8, 33);
    CHECK_THROWS_AS(ssim(tiny, tiny), ShapeError);
}

TEST_CASE("ssim handles rgb via luma") {
    Image a = make_image(3, 16, 16, 41);
    CHECK(ssim(a, a) == doctest::Approx(1.0));
    Image b = a;
    for (float& v : b.data) v = std::min(1.0f, v + 0.05f);
    double s = ssim(a, b);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
}

TEST_CASE("pdist zero, symmetric, deterministic") {
    Image a = make_image(1, 16, 16, 51);
    Image b = make_image(1, 16, 16, 52);
    CHECK(pdist(a, a) == doctest::Approx(0.0));
    CHECK(pdist(a, b) > 0.0);
    CHECK(pdist(a, b) == doctest::Approx(pdist(b, a)).epsilon(1e-9));
    CHECK(pdist(a, b) == doctest::Approx(pdist(a, b)));  // repeated call identical

    Image c = make_image(1, 16, 17, 53);
    CHECK_THROWS_AS(pdist(a, c), ShapeError);
}

TEST_CASE("pdist penalizes blur more than matched-MSE noise") {
    Image x = textured_image(32);

    // 5x5 box blur (clamped borders)
    Image blurred = x;
    for (int y = 0; y < 32; ++y)
        for (int c = 0; c < 32; ++c) {
            double s = 0.0;
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx) {
                    int yy = std::min(31, std::max(0, y + dy));
                    int xx = std::min(31, std::max(0, c + dx));
                    s += x.at(0, yy, xx);
                }
            blurred.at(0, y, c) = static_cast<float>(s / 25.0);
        }
    double target_mse = mse_of(x, blurred);
    REQUIRE(target_mse > 0.0);

    // scale a fixed noise field so the noisy copy hits the same MSE
    Rng rng(7);
    std::vector<double> noise(x.data.size());
    double noise_ms = 0.0;
    for (double& v : noise) {
        v = rng.normal();
        noise_ms += v * v;
    }
    noise_ms /= static_cast<double>(noise.size());
    double amp = std::sqrt(target_mse / noise_ms);
    Image noisy = x;
    for (std::size_t i = 0; i < noisy.data.size(); ++i)
        noisy.data[i] += static_cast<float>(amp * noise[i]);

    CHECK(mse_of(x, noisy) == doctest::Approx(target_mse).epsilon(1e-6));
    CHECK(pdist(x, blurred) > pdist(x, noisy));
}

namespace {

RDCurve toy_curve(const std::string& label, double rate_scale, double slope = 6.0,
                  double curvature = 0.4) {
    // quality follows a + b*log(rate) with mild curvature; dense enough that
    // the trapezoidal oracle and the cubic fit agree closely
    RDCurve c;
    c.label = label;
    for (int i = 0; i < 8; ++i) {
        RDPoint p;
        p.label = label;
        p.bpp = rate_scale * (0.2 + 0.15 * i);
        double lr = std::log(0.2 + 0.15 * i);
        p.psnr_db = 48.0 + slope * lr + curvature * lr * lr;
        c.points.push_back(p);
    }
    return c;
}

// piecewise-linear log-rate as a function of quality, integrated exactly
double trapezoid_bd(const RDCurve& anchor, const RDCurve& test) {
    auto lograte_at = [](const RDCurve& c, double q) {
        for (std::size_t i = 1; i < c.points.size(); ++i) {
            double q0 = c.points[i - 1].psnr_db, q1 = c.points[i].psnr_db;
            if (q >= std::min(q0, q1) - 1e-12 && q <= std::max(q0, q1) + 1e-12) {
                double t = (q - q0) / (q1 - q0);
                return (1.0 - t) * std::log(c.points[i - 1].bpp) + t * std::log(c.points[i].bpp);
            }
        }
        throw std::runtime_error("query outside curve");
    };
    double lo = std::max(anchor.points.front().psnr_db, test.points.front().psnr_db);
    double hi = std::min(anchor.points.back().psnr_db, test.points.back().psnr_db);
    int n = 2000;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        double q = lo + (hi - lo) * i / n;
        double w = (i == 0 || i == n) ? 0.5 : 1.0;
        acc += w * (lograte_at(test, q) - lograte_at(anchor, q));
    }
    double mean = acc / n;
    return 100.0 * (std::exp(mean) - 1.0);
}

}  // namespace

TEST_CASE("bd_rate identical curves -> 0") {
    RDCurve a = toy_curve("a", 1.0);
    CHECK(bd_rate(a, a, "psnr") == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("bd_rate doubled rates -> +100%") {
    RDCurve a = toy_curve("a", 1.0);
    RDCurve b = a;
    b.label = "b";
    for (RDPoint& p : b.points) p.bpp *= 2.0;
    double bd = bd_rate(a, b, "psnr");
    CHECK(bd == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(std::abs(bd - trapezoid_bd(a, b)) < 0.5);
}

TEST_CASE("bd_rate vs trapezoidal oracle on distinct sweeps") {
    RDCurve a = toy_curve("a", 1.0);
    RDCurve b = toy_curve("b", 1.3, 6.5, 0.3);
    double bd = bd_rate(a, b, "psnr");
    CHECK(std::isfinite(bd));
    CHECK(std::abs(bd - trapezoid_bd(a, b)) < 0.5);
}

TEST_CASE("bd_rate reciprocal consistency") {
    RDCurve a = toy_curve("a", 1.0);
    RDCurve b = toy_curve("b", 1.45, 5.5, 0.45);
    double ab = bd_rate(a, b, "psnr");
    double ba = bd_rate(b, a, "psnr");
    CHECK(std::abs(ab - (-ba / (1.0 + ba / 100.0))) < 0.1);
}

TEST_CASE("bd_rate input validation") {
    RDCurve a = toy_curve("a", 1.0);

    RDCurve few = a;
    few.points.resize(3);
    CHECK_THROWS_AS(bd_rate(few, a, "psnr"), ConfigError);

    RDCurve far = a;
    for (RDPoint& p : far.points) p.psnr_db += 1000.0;  // no quality overlap
    CHECK_THROWS_AS(bd_rate(a, far, "psnr"), ConfigError);

    RDCurve zigzag = a;
    zigzag.points[2].psnr_db = zigzag.points[0].psnr_db - 1.0;
    CHECK_THROWS_AS(bd_rate(a, zigzag, "psnr"), ConfigError);

    RDCurve unsorted = a;
    std::swap(unsorted.points[1].bpp, unsorted.points[2].bpp);
    CHECK_THROWS_AS(bd_rate(a, unsorted, "psnr"), ConfigError);

    CHECK_THROWS_AS(bd_rate(a, a, "sharpness"), ConfigError);
}
