#include <cmath>
#include <vector>

#include "alf/fusion.hpp"
#include "alf/metrics.hpp"
#include "alf/ops.hpp"
#include "doctest.h"

using namespace alf;

namespace {

CodecConfig toy_codec_config() {
    CodecConfig c;
    c.image_channels = 1;
    c.latent_channels = 8;
    c.num_downsamples = 2;
    c.beta = 0.1;
    return c;
}

DenoiserConfig toy_denoiser_config() {
    DenoiserConfig d;
    d.num_units = 1;
    d.channels = 16;
    d.time_embed_dim = 32;
    return d;
}

Image toy_image(int n, std::uint64_t seed) {
    Rng rng(seed);
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

Tensor random_latent(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::zeros(shape);
    for (float& v : t.impl()->data) v = static_cast<float>(rng.normal());
    return t;
}

}  // namespace

TEST_CASE("forward noising process") {
    NoiseSchedule s = make_schedule(2, 0.1, 0.2);
    Shape shape{1, 2, 3, 3};
    Tensor y = random_latent(shape, 1);
    Tensor eps = random_latent(shape, 2);

    // t = 0 is the clean signal
    Tensor y0 = forward_noise(y, 0, Tensor::zeros(shape), s);
    CHECK(y0.data() == y.data());

    // zero noise scales by sqrt(alpha)
    Tensor y2 = forward_noise(y, 2, Tensor::zeros(shape), s);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(y2.at(i) == doctest::Approx(std::sqrt(0.72) * y.at(i)).epsilon(1e-6));

    CHECK_THROWS_AS(forward_noise(y, 3, eps, s), ShapeError);
    CHECK_THROWS_AS(forward_noise(y, 2, Tensor::zeros({1, 2, 3, 4}), s), ShapeError);
}

TEST_CASE("forward noising matches its moments") {
    NoiseSchedule s = make_schedule(2, 0.1, 0.2);
    Tensor y = Tensor::full({1, 1, 1, 1}, 0.7f);
    Rng rng(3);
    const int n = 10000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        Tensor eps = Tensor::full({1, 1, 1, 1}, static_cast<float>(rng.normal()));
        double v = forward_noise(y, 2, eps, s).item();
        sum += v;
        sum2 += v * v;
    }
    double mean = sum / n;
    double var = sum2 / n - mean * mean;
    double expect_mean = std::sqrt(0.72) * 0.7;
    double expect_var = 0.28;
    CHECK(std::abs(mean - expect_mean) < 3.0 * std::sqrt(expect_var / n));
    CHECK(std::abs(var - expect_var) < 3.0 * expect_var * std::sqrt(2.0 / n));
}

TEST_CASE("noise prediction inverts the forward map") {
    NoiseSchedule s = make_schedule(2, 0.1, 0.2);

    // scalar oracle: alpha=0.72, y_t=1, d=0.5
    Tensor y_t = Tensor::full({1, 1, 1, 1}, 1.0f);
    Tensor d = Tensor::full({1, 1, 1, 1}, 0.5f);
    double oracle = (1.0 - std::sqrt(0.72) * 0.5) / std::sqrt(0.28);
    CHECK(predict_noise(y_t, d, 2, s).item() == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(oracle == doctest::Approx(1.0880).epsilon(1e-3));

    // d = y_t / sqrt(alpha) -> zero predicted noise
    Tensor d0 = Tensor::full({1, 1, 1, 1}, static_cast<float>(1.0 / std::sqrt(0.72)));
    CHECK(predict_noise(y_t, d0, 2, s).item() == doctest::Approx(0.0).epsilon(1e-6));

    // algebraic identity on random tensors, every valid t
    Shape shape{1, 4, 3, 3};
    for (int t = 1; t <= 2; ++t) {
        Tensor yt = random_latent(shape, 10 + static_cast<std::uint64_t>(t));
        Tensor dd = random_latent(shape, 20 + static_cast<std::uint64_t>(t));
        Tensor eps_hat = predict_noise(yt, dd, t, s);
        double a = s.alpha(t);
        for (std::size_t i = 0; i < yt.size(); ++i) {
            double rec = std::sqrt(a) * dd.at(i) + std::sqrt(1.0 - a) * eps_hat.at(i);
            CHECK(std::abs(rec - yt.at(i)) < 1e-6);
        }
    }

    CHECK_THROWS_AS(predict_noise(y_t, d, 0, s), ConfigError);
}

TEST_CASE("tau-weighted ddim update") {
    NoiseSchedule s = make_schedule(2, 0.1, 0.2);
    Tensor y_t = Tensor::full({1, 1, 1, 1}, 1.0f);
    Tensor y_hat = Tensor::full({1, 1, 1, 1}, 2.0f);
    Tensor d = Tensor::full({1, 1, 1, 1}, 0.5f);

    SUBCASE("scalar oracle at tau=0.5") {
        double eps_hat = (1.0 - std::sqrt(0.72) * 0.5) / std::sqrt(0.28);
        double bracket = 0.75 * 0.5 + 0.25 * 2.0;
        double oracle = std::sqrt(0.9) * bracket + 0.75 * std::sqrt(0.1) * eps_hat;
        CHECK(ddim_update(y_t, y_hat, d, 2, 1, 0.5, s).item() == doctest::Approx(oracle).epsilon(1e-6));
        CHECK(oracle == doctest::Approx(1.0882).epsilon(1e-3));
    }
    SUBCASE("tau=1 ignores the model output") {
        Shape shape{1, 3, 2, 2};
        Tensor yt = random_latent(shape, 5);
        Tensor yh = random_latent(shape, 6);
        Tensor dd = random_latent(shape, 7);
        Tensor out = ddim_update(yt, yh, dd, 2, 1, 1.0, s);
        for (std::size_t i = 0; i < out.size(); ++i)
            CHECK(std::abs(out.at(i) - std::sqrt(0.9) * yh.at(i)) < 1e-6);
    }
    SUBCASE("tau=0 is the plain ddim step") {
        Shape shape{1, 3, 2, 2};
        Tensor yt = random_latent(shape, 8);
        Tensor yh = random_latent(shape, 9);
        Tensor dd = random_latent(shape, 10);
        Tensor out = ddim_update(yt, yh, dd, 2, 1, 0.0, s);
        Tensor eps_hat = predict_noise(yt, dd, 2, s);
        for (std::size_t i = 0; i < out.size(); ++i) {
            double plain = std::sqrt(0.9) * dd.at(i) + std::sqrt(0.1) * eps_hat.at(i);
            CHECK(std::abs(out.at(i) - plain) < 1e-6);
        }
    }
    SUBCASE("ordering validation") {
        CHECK_THROWS_AS(ddim_update(y_t, y_hat, d, 1, 1, 0.5, s), ConfigError);
        CHECK_THROWS_AS(ddim_update(y_t, y_hat, d, 1, 2, 0.5, s), ConfigError);
        CHECK_THROWS_AS(ddim_update(y_t, y_hat, d, 2, 1, 1.5, s), ConfigError);
    }
}

TEST_CASE("ancestral sampler step") {
    // hand-crafted schedule so beta(1)=0.1 while the cumulative alpha is 0.72
    NoiseSchedule s;
    s.t_train = 1;
    s.betas = {0.1};
    s.alphas = {1.0, 0.72};
    s.validate();

    Rng rng(4);
    Tensor x = Tensor::full({1, 1, 1, 1}, 1.0f);

    Tensor drift = ancestral_step(x, Tensor::zeros({1, 1, 1, 1}), 1, s, 0.0, rng);
    CHECK(drift.item() == doctest::Approx(1.0 / std::sqrt(0.9)).epsilon(1e-6));

    Tensor eps_hat = Tensor::full({1, 1, 1, 1}, 0.5f);
    double oracle = (1.0 - (0.1 / std::sqrt(0.28)) * 0.5) / std::sqrt(0.9);
    CHECK(ancestral_step(x, eps_hat, 1, s, 0.0, rng).item() == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(oracle == doctest::Approx(0.9546).epsilon(1e-3));

    Rng r1(5), r2(6);
    CHECK(ancestral_step(x, eps_hat, 1, s, 0.3, r1).item() !=
          ancestral_step(x, eps_hat, 1, s, 0.3, r2).item());

    CHECK_THROWS_AS(ancestral_step(x, eps_hat, 0, s, 0.0, rng), ConfigError);
}

TEST_CASE("denoiser forward") {
    DenoiserConfig dc = toy_denoiser_config();
    Rng rng(11);
    Denoiser d = Denoiser::create(8, dc, rng);
    Shape shape{1, 8, 4, 4};
    Tensor y_t = random_latent(shape, 12);
    Tensor y_hat = random_latent(shape, 13);

    NoGradScope ng;
    Tensor out = d.forward(y_t, y_hat, 0.5f);
    CHECK(out.shape() == shape);
    check_finite(out, "denoiser output");

    // conditioning is live
    Tensor y_hat2 = random_latent(shape, 14);
    CHECK(d.forward(y_t, y_hat2, 0.5f).data() != out.data());

    // time input is live once the residual branches are nonzero (their final
    // convs are zero-initialized, so a fresh model is time-invariant)
    CHECK(d.forward(y_t, y_hat, 0.0f).data() == d.forward(y_t, y_hat, 1.0f).data());
    Rng perturb(18);
    for (auto& [name, p] : d.parameters())
        if (name.find("conv2.w") != std::string::npos)
            for (float& v : p.impl()->data) v = static_cast<float>(0.05 * perturb.normal());
    CHECK(d.forward(y_t, y_hat, 0.0f).data() != d.forward(y_t, y_hat, 1.0f).data());

    CHECK_THROWS_AS(d.forward(y_t, random_latent({1, 8, 4, 5}, 15), 0.5f), ShapeError);
    CHECK_THROWS_AS(d.forward(random_latent({1, 4, 4, 4}, 16), random_latent({1, 4, 4, 4}, 17), 0.5f),
                    ShapeError);

    DenoiserConfig bad = dc;
    bad.channels = 4;  // below latent channels
    CHECK_THROWS_AS(Denoiser::create(8, bad, rng), ConfigError);

    // checkpoint round trip reproduces the function
    Denoiser back = Denoiser::from_checkpoint(d.to_checkpoint());
    CHECK(back.forward(y_t, y_hat, 0.25f).data() == d.forward(y_t, y_hat, 0.25f).data());
}

TEST_CASE("sampler endpoints and determinism") {
    NoiseSchedule s = make_schedule(50, 1e-3, 0.05);
    DenoiserConfig dc = toy_denoiser_config();
    Rng rng(21);
    Denoiser d = Denoiser::create(8, dc, rng);
    Tensor y_hat = random_latent({1, 8, 4, 4}, 22);

    SamplerConfig cfg;
    cfg.steps = 5;
    cfg.seed = 9;

    SUBCASE("tau=1 returns the base latent exactly") {
        cfg.tau = 1.0;
        CHECK(sample(y_hat, cfg, d, s).data() == y_hat.data());
        cfg.steps = 1;
        cfg.seed = 777;
        CHECK(sample(y_hat, cfg, d, s).data() == y_hat.data());
    }
    SUBCASE("fixed seed is bit-reproducible; seeds matter at tau<1") {
        cfg.tau = 0.0;
        Tensor a = sample(y_hat, cfg, d, s);
        Tensor b = sample(y_hat, cfg, d, s);
        CHECK(a.data() == b.data());
        cfg.seed = 10;
        CHECK(sample(y_hat, cfg, d, s).data() != a.data());
    }
    SUBCASE("config validation") {
        cfg.steps = 0;
        CHECK_THROWS_AS(sample(y_hat, cfg, d, s), ConfigError);
        cfg.steps = 51;
        CHECK_THROWS_AS(sample(y_hat, cfg, d, s), ConfigError);
        cfg.steps = 5;
        cfg.tau = -0.1;
        CHECK_THROWS_AS(sample(y_hat, cfg, d, s), ConfigError);
    }
    SUBCASE("full-grid sampling works") {
        cfg.steps = 50;
        cfg.tau = 0.3;
        check_finite(sample(y_hat, cfg, d, s), "full-grid sample");
    }
}

TEST_CASE("aux encoder initialization and frozen decoder") {
    CodecConfig cc = toy_codec_config();
    auto data = toy_dataset(6, 16);
    BaseTrainResult base = train_base(data, cc, 600, 31, 3e-3);
    std::uint64_t gs_hash = base.codec.to_checkpoint().tensor_hash("gs.");

    // steps = 0: identical to g_a
    AuxTrainResult aux0 = train_aux_encoder(base.codec, data, 0, 32);
    NoGradScope ng;
    Tensor x = data[0].to_tensor();
    CHECK(aux0.encoder.forward(x).data() == base.codec.analysis(x).data());

    // short training run: loss decreases, g_s untouched, checkpoint round-trips
    AuxTrainResult aux = train_aux_encoder(base.codec, data, 200, 32, 1e-3);
    REQUIRE(aux.log.size() == 200);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 20; ++i) {
        first += aux.log[static_cast<std::size_t>(i)].loss;
        last += aux.log[aux.log.size() - 20 + static_cast<std::size_t>(i)].loss;
    }
    CHECK(last < first);
    CHECK(base.codec.to_checkpoint().tensor_hash("gs.") == gs_hash);

    AuxEncoder back = AuxEncoder::from_checkpoint(aux.encoder.to_checkpoint());
    CHECK(back.hash() == aux.encoder.hash());
    CHECK(back.forward(x).data() == aux.encoder.forward(x).data());
}

TEST_CASE("aux encoder improves perceptual reconstruction") {
    CodecConfig cc = toy_codec_config();
    auto data = toy_dataset(6, 16);
    BaseTrainResult base = train_base(data, cc, 1000, 41, 3e-3);
    AuxTrainResult aux = train_aux_encoder(base.codec, data, 800, 42, 1e-3);

    NoGradScope ng;
    double base_pd = 0.0, aux_pd = 0.0;
    const int held_out = 4;
    for (int i = 0; i < held_out; ++i) {
        Image img = toy_image(16, 9000 + static_cast<std::uint64_t>(i));
        Tensor x = img.to_tensor();
        Tensor via_base = base.codec.synthesis(ops::round_ste(base.codec.analysis(x)));
        Tensor via_aux = base.codec.synthesis(ops::round_ste(aux.encoder.forward(x)));
        base_pd += pdist_graph(x, via_base).item();
        aux_pd += pdist_graph(x, via_aux).item();
    }
    CHECK(aux_pd < base_pd);
}

TEST_CASE("fusion training dynamics") {
    CodecConfig cc = toy_codec_config();
    auto data = toy_dataset(4, 16);
    BaseTrainResult base = train_base(data, cc, 400, 51, 3e-3);
    AuxTrainResult aux = train_aux_encoder(base.codec, data, 200, 52, 1e-3);
    NoiseSchedule s = make_schedule(100, 1e-3, 0.03);
    DenoiserConfig dc = toy_denoiser_config();

    std::uint64_t base_hash = base.codec.hash();
    std::uint64_t aux_hash = aux.encoder.hash();

    FusionTrainResult fus = train_fusion(base.codec, aux.encoder, data, 1.0, 800, s, 53, dc, 1e-3);
    REQUIRE(fus.log.size() == 800);

    // frozen-base contract
    CHECK(base.codec.hash() == base_hash);
    CHECK(aux.encoder.hash() == aux_hash);

    auto decile = [&](const std::vector<FusionStepLog>& log, bool first) {
        std::size_t n = log.size() / 10;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += log[first ? i : log.size() - n + i].loss;
        return sum / static_cast<double>(n);
    };
    CHECK(decile(fus.log, false) < decile(fus.log, true));

    // with the latent term weighted it gets optimized; with lambda=0 it is
    // free to drift while the reconstruction term still trains to a finite loss
    FusionTrainResult hard = train_fusion(base.codec, aux.encoder, data, 1000.0, 800, s, 53, dc, 1e-3);
    FusionTrainResult free_latent = train_fusion(base.codec, aux.encoder, data, 0.0, 800, s, 53, dc, 1e-3);
    auto tail_latent = [&](const FusionTrainResult& r) {
        double sum = 0.0;
        for (std::size_t i = r.log.size() - 100; i < r.log.size(); ++i) sum += r.log[i].latent_term;
        return sum / 100.0;
    };
    CHECK(tail_latent(hard) < tail_latent(free_latent));
    CHECK(std::isfinite(free_latent.log.back().loss));

    CHECK_THROWS_AS(train_fusion(base.codec, aux.encoder, data, -1.0, 10, s, 55, dc), ConfigError);
}

TEST_CASE("controlled decode") {
    CodecConfig cc = toy_codec_config();
    auto data = toy_dataset(4, 16);
    BaseTrainResult base = train_base(data, cc, 400, 61, 3e-3);
    NoiseSchedule s = make_schedule(100, 1e-3, 0.03);
    DenoiserConfig dc = toy_denoiser_config();
    Rng rng(62);
    Denoiser d = Denoiser::create(cc.latent_channels, dc, rng);

    Image img = toy_image(16, 63);
    BitstreamFile bs = base.codec.encode_image(img);

    SamplerConfig cfg;
    cfg.steps = 10;
    cfg.seed = 64;

    SUBCASE("tau=1 equals the plain base decode") {
        cfg.tau = 1.0;
        Image via_sampler = decode_controlled(bs, cfg, base.codec, d, s);
        Image plain = base.codec.decode_image(bs);
        REQUIRE(via_sampler.data.size() == plain.data.size());
        for (std::size_t i = 0; i < plain.data.size(); ++i)
            CHECK(std::abs(via_sampler.data[i] - plain.data[i]) < 1e-6);
    }
    SUBCASE("deterministic given (bitstream, tau, seed)") {
        cfg.tau = 0.3;
        Image a = decode_controlled(bs, cfg, base.codec, d, s);
        Image b = decode_controlled(bs, cfg, base.codec, d, s);
        CHECK(a.data == b.data);
    }
    SUBCASE("refuses a foreign bitstream") {
        BitstreamFile bad = bs;
        bad.model_hash ^= 1;
        CHECK_THROWS_AS(decode_controlled(bad, cfg, base.codec, d, s), DecodeError);
    }
}

TEST_CASE("variant1 translator") {
    CodecConfig cc = toy_codec_config();
    auto data = toy_dataset(4, 16);
    BaseTrainResult base = train_base(data, cc, 400, 71, 3e-3);
    DenoiserConfig dc = toy_denoiser_config();

    Variant1TrainResult var = train_variant1(base.codec, data, 200, 72, dc, 1e-3);
    REQUIRE(var.log.size() == 200);

    NoGradScope ng;
    Tensor y_hat = ops::round_ste(base.codec.analysis(data[0].to_tensor()));
    Tensor y_tilde = translate_variant1(y_hat, var.model);
    CHECK(y_tilde.shape() == y_hat.shape());
    check_finite(y_tilde, "variant1 output");

    double first = 0.0, last = 0.0;
    for (int i = 0; i < 20; ++i) {
        first += var.log[static_cast<std::size_t>(i)].loss;
        last += var.log[var.log.size() - 20 + static_cast<std::size_t>(i)].loss;
    }
    CHECK(last < first);

    Variant1Translator back = Variant1Translator::from_checkpoint(var.model.to_checkpoint());
    CHECK(back.forward(y_hat).data() == var.model.forward(y_hat).data());
}
