#include <cmath>
#include <vector>

#include "alf/codec.hpp"
#include "alf/metrics.hpp"
#include "alf/ops.hpp"
#include "doctest.h"

using namespace alf;

namespace {

CodecConfig toy_config() {
    CodecConfig c;
    c.image_channels = 1;
    c.latent_channels = 8;
    c.num_downsamples = 2;
    c.beta = 0.1;
    return c;
}

Image toy_image(int n, std::uint64_t seed) {
    Rng rng(seed);
    // smooth random field: sum of a few sinusoids with random phases
    Image img;
    img.channels = 1;
    img.height = n;
    img.width = n;
    img.data.resize(static_cast<std::size_t>(n) * n);
    double p1 = rng.uniform(0, 2 * M_PI), p2 = rng.uniform(0, 2 * M_PI), p3 = rng.uniform(0, 2 * M_PI);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double v = 0.5 + 0.2 * std::sin(2 * M_PI * 2 * x / n + p1) +
                       0.15 * std::cos(2 * M_PI * 3 * y / n + p2) +
                       0.1 * std::sin(2 * M_PI * (x + y) / n + p3);
            img.at(0, y, x) = static_cast<float>(std::min(1.0, std::max(0.0, v)));
        }
    return img;
}

std::vector<Image> toy_dataset(int count, int n) {
    std::vector<Image> out;
    for (int i = 0; i < count; ++i) out.push_back(toy_image(n, 1000 + static_cast<std::uint64_t>(i)));
    return out;
}

}  // namespace

TEST_CASE("config validation") {
    CodecConfig c = toy_config();
    CHECK_NOTHROW(c.validate());
    c.beta = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = toy_config();
    c.latent_channels = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = toy_config();
    c.image_channels = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(loss_kind_from_string("fancy"), ConfigError);
}

TEST_CASE("analysis and synthesis shapes") {
    CodecConfig cfg;
    cfg.latent_channels = 8;
    cfg.num_downsamples = 3;
    Rng rng(1);
    BaseCodec codec = BaseCodec::create(cfg, rng);

    Tensor x = Tensor::zeros({1, 1, 32, 32});
    Tensor y = codec.analysis(x);
    CHECK(y.shape() == Shape{1, 8, 4, 4});
    check_finite(y, "latent");
    // deterministic on repeated calls
    CHECK(codec.analysis(x).data() == y.data());

    Tensor x_hat = codec.synthesis(y);
    CHECK(x_hat.shape() == Shape{1, 1, 32, 32});

    CHECK_THROWS_AS(codec.analysis(Tensor::zeros({1, 1, 30, 32})), ShapeError);
    CHECK_THROWS_AS(codec.analysis(Tensor::zeros({1, 3, 32, 32})), ShapeError);
    CHECK_THROWS_AS(codec.synthesis(Tensor::zeros({1, 4, 4, 4})), ShapeError);
}

TEST_CASE("quantizer modes") {
    Rng rng(2);
    Tensor y = Tensor::from_data({1, 1, 1, 4}, {0.4f, -1.6f, 0.5f, -0.5f});
    Tensor r = quantize(y, QuantizeMode::eval, rng);
    CHECK(r.at(0) == 0.0f);
    CHECK(r.at(1) == -2.0f);
    CHECK(r.at(2) == 1.0f);   // half away from zero
    CHECK(r.at(3) == -1.0f);

    // train mode: bounded perturbation, zero-mean over many draws
    Tensor big = Tensor::zeros({1, 1, 100, 100});
    double mean = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
        Tensor q = quantize(big, QuantizeMode::train, rng);
        for (float v : q.data()) {
            CHECK(std::abs(v) <= 0.5f);
            mean += v;
        }
    }
    mean /= 1e5;
    CHECK(std::abs(mean) < 0.005);
}

TEST_CASE("latent coding is lossless") {
    Shape shape{1, 4, 6, 6};
    std::vector<float> means{0.0f, 0.5f, -1.0f, 2.0f};
    std::vector<float> scales{0.5f, 1.0f, 2.0f, 8.0f};

    auto roundtrip = [&](const std::vector<std::int32_t>& symbols) {
        LatentCode code;
        code.shape = shape;
        code.symbols = symbols;
        code.channel_means = means;
        code.channel_scales = scales;
        LatentCode back = decode_latent(encode_latent(code), shape, means, scales);
        CHECK(back.symbols == symbols);
    };

    SUBCASE("random, including out-of-support escapes") {
        Rng rng(3);
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<std::int32_t> symbols(numel(shape));
            for (auto& s : symbols)
                s = static_cast<std::int32_t>(std::lround(rng.normal() * 40.0));  // tails exceed 63
            roundtrip(symbols);
        }
    }
    SUBCASE("all identical") { roundtrip(std::vector<std::int32_t>(numel(shape), 7)); }
    SUBCASE("alternating extremes") {
        std::vector<std::int32_t> symbols(numel(shape));
        for (std::size_t i = 0; i < symbols.size(); ++i) symbols[i] = (i % 2) ? kSymbolLo : kSymbolHi;
        roundtrip(symbols);
    }
    SUBCASE("far out of range literals") {
        std::vector<std::int32_t> symbols(numel(shape), 100000);
        roundtrip(symbols);
    }
}

TEST_CASE("estimated rate tracks coded payload size") {
    CodecConfig cfg = toy_config();
    Rng rng(4);
    BaseCodec codec = BaseCodec::create(cfg, rng);
    for (float& v : codec.em_log_scale.impl()->data) v = std::log(2.0f);

    // 1000 spatial positions per channel of symbols drawn from the model
    Shape shape{1, cfg.latent_channels, 25, 40};
    std::vector<float> vals(numel(shape));
    for (float& v : vals) v = static_cast<float>(std::lround(rng.normal() * 2.0));
    Tensor y_hat = Tensor::from_data(shape, vals);

    double estimated = rate_estimate(y_hat, codec).item();
    LatentCode code = codec.make_code(y_hat);
    auto payload = encode_latent(code);
    double coded_bits = 8.0 * static_cast<double>(payload.size() - 16);  // strip framing
    CHECK(std::abs(estimated - coded_bits) < 0.02 * estimated + 32.0);
}

TEST_CASE("image bitstream round trip and tamper detection") {
    CodecConfig cfg = toy_config();
    Rng rng(5);
    BaseCodec codec = BaseCodec::create(cfg, rng);
    Image img = toy_image(16, 42);

    BitstreamFile bs = codec.encode_image(img);
    CHECK(bs.channels == cfg.latent_channels);
    CHECK(bs.height == 4);
    CHECK(bs.width == 4);
    CHECK(bs.model_hash == codec.hash());

    // decoded latent is exactly the rounded analysis output
    {
        NoGradScope ng;
        Tensor expect = ops::round_ste(codec.analysis(img.to_tensor()));
        CHECK(codec.decode_latent_tensor(bs).data() == expect.data());
    }
    Image out = codec.decode_image(bs);
    CHECK(out.height == img.height);
    CHECK(out.width == img.width);

    // decoding with a different model refuses
    BaseCodec other = BaseCodec::create(cfg, rng);
    CHECK_THROWS_AS(other.decode_image(bs), DecodeError);

    // corrupted payload bytes are detected, never silently mis-decoded
    BitstreamFile bad = bs;
    bad.payload[bad.payload.size() / 2] ^= 0x5A;
    CHECK_THROWS_AS(codec.decode_image(bad), DecodeError);
}

TEST_CASE("checkpoint round trip preserves behaviour") {
    CodecConfig cfg = toy_config();
    Rng rng(6);
    BaseCodec codec = BaseCodec::create(cfg, rng);
    BaseCodec back = BaseCodec::from_checkpoint(codec.to_checkpoint());
    CHECK(back.hash() == codec.hash());

    Image img = toy_image(16, 7);
    NoGradScope ng;
    CHECK(back.analysis(img.to_tensor()).data() == codec.analysis(img.to_tensor()).data());

    Checkpoint ck = codec.to_checkpoint();
    ck.metadata = R"({"kind":"other"})";
    CHECK_THROWS_AS(BaseCodec::from_checkpoint(ck), IoError);
}

TEST_CASE("zero-step training returns the initialization") {
    CodecConfig cfg = toy_config();
    auto data = toy_dataset(2, 16);
    BaseTrainResult r = train_base(data, cfg, 0, 77);
    Rng rng = Rng::derive(77, 1);
    BaseCodec fresh = BaseCodec::create(cfg, rng);
    CHECK(r.codec.hash() == fresh.hash());
    CHECK(r.log.empty());

    CHECK_THROWS_AS(train_base({}, cfg, 10, 1), ConfigError);
}

TEST_CASE("training reduces the rate-distortion loss") {
    CodecConfig cfg = toy_config();
    auto data = toy_dataset(6, 16);
    int steps = 300;
    BaseTrainResult r = train_base(data, cfg, steps, 11);
    REQUIRE(static_cast<int>(r.log.size()) == steps);

    auto mean_loss = [&](int lo, int hi) {
        double s = 0.0;
        for (int i = lo; i < hi; ++i) s += r.log[static_cast<std::size_t>(i)].loss;
        return s / (hi - lo);
    };
    int tenth = steps / 10;
    CHECK(mean_loss(steps - tenth, steps) < mean_loss(0, tenth));
}

TEST_CASE("beta steers the rate-distortion trade-off") {
    auto data = toy_dataset(6, 16);
    auto run = [&](double beta) {
        CodecConfig cfg = toy_config();
        cfg.beta = beta;
        BaseTrainResult r = train_base(data, cfg, 1000, 13, 3e-3);
        // measure on the real coding path, averaged over the dataset
        NoGradScope ng;
        double bpp = 0.0, mse = 0.0;
        for (const Image& img : data) {
            BitstreamFile bs = r.codec.encode_image(img);
            bpp += 8.0 * static_cast<double>(bs.payload.size()) / (img.height * img.width);
            Image out = r.codec.decode_image(bs);
            double s = 0.0;
            for (std::size_t i = 0; i < out.data.size(); ++i) {
                double d = static_cast<double>(out.data[i]) - img.data[i];
                s += d * d;
            }
            mse += s / static_cast<double>(out.data.size());
        }
        return std::pair<double, double>(bpp / data.size(), mse / data.size());
    };
    auto [bpp_lo, mse_lo] = run(0.01);
    auto [bpp_hi, mse_hi] = run(1.0);
    CHECK(bpp_hi > bpp_lo);  // more weight on distortion -> spend more bits
    CHECK(mse_hi < mse_lo);
}

TEST_CASE("trained codec beats the dc baseline on held-out images") {
    CodecConfig cfg = toy_config();
    auto train_set = toy_dataset(6, 16);
    BaseTrainResult r = train_base(train_set, cfg, 400, 19);

    NoGradScope ng;
    int wins = 0;
    const int held_out = 4;
    for (int i = 0; i < held_out; ++i) {
        Image img = toy_image(16, 9000 + static_cast<std::uint64_t>(i));
        Image out = r.codec.decode_image(r.codec.encode_image(img));
        double mean = 0.0;
        for (float v : img.data) mean += v;
        mean /= static_cast<double>(img.data.size());
        double mse = 0.0, dc = 0.0;
        for (std::size_t k = 0; k < img.data.size(); ++k) {
            double d = static_cast<double>(out.data[k]) - img.data[k];
            mse += d * d;
            double e = static_cast<double>(img.data[k]) - mean;
            dc += e * e;
        }
        if (mse < dc) ++wins;
    }
    CHECK(wins == held_out);
}

TEST_CASE("trained latents separate different images") {
    CodecConfig cfg = toy_config();
    auto data = toy_dataset(6, 16);
    BaseTrainResult r = train_base(data, cfg, 300, 23);
    NoGradScope ng;
    std::vector<std::vector<std::int32_t>> codes;
    for (int i = 0; i < 20; ++i) {
        Image img = toy_image(16, 5000 + static_cast<std::uint64_t>(i));
        Tensor y = ops::round_ste(r.codec.analysis(img.to_tensor()));
        codes.push_back(r.codec.make_code(y).symbols);
    }
    for (std::size_t i = 0; i < codes.size(); ++i)
        for (std::size_t j = i + 1; j < codes.size(); ++j) CHECK(codes[i] != codes[j]);
}
