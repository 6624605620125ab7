#include "alf/codec.hpp"

#include <cmath>
#include <cstdio>

#include "alf/metrics.hpp"
#include "alf/ops.hpp"
#include "alf/optim.hpp"
#include "alf/rangecoder.hpp"
#include "json.hpp"

namespace alf {

namespace {

// distortion term scaling so the pinned beta grid {0.01, 0.1, 1.0} spans a
// usable rate range: MSE in [0,1] units is scaled to 8-bit units (255^2),
// the perceptual proxy to a comparable magnitude
constexpr double kDistortionScale = 255.0 * 255.0;
constexpr double kPerceptionScale = 1000.0;

}  // namespace

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "distortion") return LossKind::distortion;
    if (s == "perception") return LossKind::perception;
    throw ConfigError("unknown loss kind '" + s + "' (want distortion|perception)");
}

std::string to_string(LossKind k) { return k == LossKind::distortion ? "distortion" : "perception"; }

void CodecConfig::validate() const {
    if (image_channels != 1 && image_channels != 3) throw ConfigError("codec: image_channels must be 1 or 3");
    if (latent_channels < 1) throw ConfigError("codec: latent_channels must be >= 1");
    if (num_downsamples < 1 || num_downsamples > 6) throw ConfigError("codec: num_downsamples out of range");
    if (!(beta > 0.0)) throw ConfigError("codec: beta must be > 0");
}

BaseCodec BaseCodec::create(const CodecConfig& config, Rng& rng) {
    config.validate();
    BaseCodec c;
    c.config = config;
    int in = config.image_channels;
    for (int i = 0; i < config.num_downsamples; ++i) {
        c.enc.push_back(nn::Conv2d::create(in, config.latent_channels, 4, 2, 1, rng));
        in = config.latent_channels;
    }
    for (int i = 0; i < config.num_downsamples; ++i) {
        int out = (i + 1 == config.num_downsamples) ? config.image_channels : config.latent_channels;
        c.dec.push_back(nn::ConvT2d::create(config.latent_channels, out, 4, 2, 1, rng));
    }
    c.em_mean = Tensor::zeros({config.latent_channels}, true);
    c.em_log_scale = Tensor::zeros({config.latent_channels}, true);
    return c;
}

Tensor BaseCodec::analysis(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != config.image_channels)
        throw ShapeError("analysis: expected [1," + std::to_string(config.image_channels) + ",H,W], got " +
                         shape_str(x.shape()));
    int f = config.downsample_factor();
    if (x.dim(2) % f != 0 || x.dim(3) % f != 0)
        throw ShapeError("analysis: image side must be divisible by " + std::to_string(f));
    Tensor h = x;
    for (std::size_t i = 0; i < enc.size(); ++i) {
        h = enc[i].forward(h);
        if (i + 1 < enc.size()) h = ops::leaky_relu(h);
    }
    return h;
}

Tensor BaseCodec::synthesis(const Tensor& y) const {
    if (y.rank() != 4 || y.dim(1) != config.latent_channels)
        throw ShapeError("synthesis: expected [1," + std::to_string(config.latent_channels) + ",h,w], got " +
                         shape_str(y.shape()));
    Tensor h = y;
    for (std::size_t i = 0; i < dec.size(); ++i) {
        h = dec[i].forward(h);
        if (i + 1 < dec.size()) h = ops::leaky_relu(h);
    }
    return h;
}

nn::NamedTensors BaseCodec::parameters() const {
    nn::NamedTensors out;
    for (std::size_t i = 0; i < enc.size(); ++i) enc[i].collect("ga." + std::to_string(i) + ".", out);
    for (std::size_t i = 0; i < dec.size(); ++i) dec[i].collect("gs." + std::to_string(i) + ".", out);
    out.emplace_back("em.mean", em_mean);
    out.emplace_back("em.log_scale", em_log_scale);
    return out;
}

Checkpoint BaseCodec::to_checkpoint() const {
    Checkpoint ck;
    nlohmann::json meta;
    meta["kind"] = "base_codec";
    meta["image_channels"] = config.image_channels;
    meta["latent_channels"] = config.latent_channels;
    meta["num_downsamples"] = config.num_downsamples;
    meta["beta"] = config.beta;
    meta["loss_kind"] = to_string(config.loss_kind);
    ck.metadata = meta.dump();
    ck.tensors = parameters();
    return ck;
}

BaseCodec BaseCodec::from_checkpoint(const Checkpoint& ck) {
    nlohmann::json meta = nlohmann::json::parse(ck.metadata);
    if (meta.value("kind", "") != "base_codec") throw IoError("checkpoint is not a base codec");
    CodecConfig config;
    config.image_channels = meta.at("image_channels").get<int>();
    config.latent_channels = meta.at("latent_channels").get<int>();
    config.num_downsamples = meta.at("num_downsamples").get<int>();
    config.beta = meta.at("beta").get<double>();
    config.loss_kind = loss_kind_from_string(meta.at("loss_kind").get<std::string>());
    Rng rng(0);
    BaseCodec c = create(config, rng);
    for (auto& [name, t] : c.parameters()) {
        Tensor stored = ck.find(name);
        if (!stored.same_shape(t))
            throw IoError("checkpoint tensor " + name + " has shape " + shape_str(stored.shape()) +
                          ", expected " + shape_str(t.shape()));
        t.impl()->data = stored.data();
    }
    return c;
}

Tensor quantize(const Tensor& y, QuantizeMode mode, Rng& rng) {
    if (mode == QuantizeMode::eval) return ops::round_ste(y);
    Tensor noise = nn::uniform_noise_like(y, rng, -0.5f, 0.5f);
    return ops::add(y, noise);
}

Tensor rate_estimate(const Tensor& y_hat, const BaseCodec& codec) {
    return ops::sum_all(ops::gaussian_bits(y_hat, codec.em_mean, codec.em_log_scale));
}

LatentCode BaseCodec::make_code(const Tensor& y_rounded) const {
    if (y_rounded.rank() != 4 || y_rounded.dim(1) != config.latent_channels)
        throw ShapeError("make_code: latent shape mismatch");
    LatentCode code;
    code.shape = y_rounded.shape();
    code.symbols.reserve(y_rounded.size());
    for (float v : y_rounded.data()) {
        if (!std::isfinite(v)) throw NumericError("make_code: non-finite latent");
        code.symbols.push_back(static_cast<std::int32_t>(std::lround(v)));
    }
    for (int c = 0; c < config.latent_channels; ++c) {
        code.channel_means.push_back(em_mean.at(static_cast<std::size_t>(c)));
        float s = std::exp(em_log_scale.at(static_cast<std::size_t>(c)));
        if (!(s > 0.0f)) throw NumericError("make_code: non-positive entropy scale");
        code.channel_scales.push_back(s);
    }
    return code;
}

Tensor BaseCodec::code_to_tensor(const LatentCode& code) const {
    std::vector<float> data(code.symbols.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(code.symbols[i]);
    return Tensor::from_data(code.shape, std::move(data));
}

std::vector<std::uint8_t> encode_latent(const LatentCode& code) {
    if (code.shape.size() != 4) throw ShapeError("encode_latent: expected [1,C,h,w] shape");
    const int C = code.shape[1];
    if (static_cast<int>(code.channel_means.size()) != C ||
        static_cast<int>(code.channel_scales.size()) != C)
        throw ShapeError("encode_latent: entropy snapshot size mismatch");
    const std::size_t hw = numel(code.shape) / static_cast<std::size_t>(C);

    std::vector<CdfTable> tables;
    tables.reserve(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c)
        tables.push_back(CdfTable::gaussian(code.channel_means[static_cast<std::size_t>(c)],
                                            code.channel_scales[static_cast<std::size_t>(c)], kSymbolLo,
                                            kSymbolHi));
    const int escape = kSymbolHi - kSymbolLo + 1;

    RangeEncoder enc;
    std::vector<std::int32_t> literals;
    for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < hw; ++i) {
            std::int32_t s = code.symbols[static_cast<std::size_t>(c) * hw + i];
            if (s < kSymbolLo || s > kSymbolHi) {
                enc.encode_symbol(tables[static_cast<std::size_t>(c)], escape);
                literals.push_back(s);
            } else {
                enc.encode_symbol(tables[static_cast<std::size_t>(c)], s - kSymbolLo);
            }
        }
    if (!literals.empty())
        std::fprintf(stderr, "warning: %zu latent symbols outside [%d,%d], coded as literals\n",
                     literals.size(), kSymbolLo, kSymbolHi);

    std::vector<std::uint8_t> coded = enc.finish();
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(coded.size()));
    w.raw(coded.data(), coded.size());
    w.u32(static_cast<std::uint32_t>(literals.size()));
    for (std::int32_t v : literals) w.i32(v);
    // checksum so corruption inside the coded bytes can never decode silently
    w.u64(fnv1a64(code.symbols.data(), code.symbols.size() * sizeof(std::int32_t)));
    return w.take();
}

LatentCode decode_latent(const std::vector<std::uint8_t>& payload, const Shape& shape,
                         const std::vector<float>& means, const std::vector<float>& scales) {
    if (shape.size() != 4) throw ShapeError("decode_latent: expected [1,C,h,w] shape");
    const int C = shape[1];
    if (static_cast<int>(means.size()) != C || static_cast<int>(scales.size()) != C)
        throw ShapeError("decode_latent: entropy snapshot size mismatch");
    const std::size_t hw = numel(shape) / static_cast<std::size_t>(C);

    ByteReader r(payload);
    std::uint32_t coded_len = r.u32();
    std::vector<std::uint8_t> coded(coded_len);
    if (coded_len) r.raw(coded.data(), coded_len);

    std::vector<CdfTable> tables;
    tables.reserve(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c)
        tables.push_back(CdfTable::gaussian(means[static_cast<std::size_t>(c)],
                                            scales[static_cast<std::size_t>(c)], kSymbolLo, kSymbolHi));
    const int escape = kSymbolHi - kSymbolLo + 1;

    RangeDecoder dec(coded);
    std::vector<std::size_t> escape_slots;
    LatentCode code;
    code.shape = shape;
    code.channel_means = means;
    code.channel_scales = scales;
    code.symbols.resize(numel(shape));
    for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < hw; ++i) {
            int s = dec.decode_symbol(tables[static_cast<std::size_t>(c)]);
            std::size_t slot = static_cast<std::size_t>(c) * hw + i;
            if (s == escape)
                escape_slots.push_back(slot);
            else
                code.symbols[slot] = s + kSymbolLo;
        }
    std::uint32_t n_literals = r.u32();
    if (n_literals != escape_slots.size())
        throw DecodeError("latent literal count mismatch: stream says " + std::to_string(n_literals) +
                          ", coded symbols produced " + std::to_string(escape_slots.size()));
    for (std::size_t k = 0; k < escape_slots.size(); ++k) code.symbols[escape_slots[k]] = r.i32();
    std::uint64_t want = r.u64();
    std::uint64_t got = fnv1a64(code.symbols.data(), code.symbols.size() * sizeof(std::int32_t));
    if (want != got) throw DecodeError("latent payload checksum mismatch");
    return code;
}

BitstreamFile BaseCodec::encode_image(const Image& img) const {
    NoGradScope ng;
    Tensor y = analysis(img.to_tensor());
    Tensor y_hat = ops::round_ste(y);
    LatentCode code = make_code(y_hat);
    BitstreamFile bs;
    bs.channels = code.shape[1];
    bs.height = code.shape[2];
    bs.width = code.shape[3];
    bs.model_hash = hash();
    bs.payload = encode_latent(code);
    return bs;
}

Tensor BaseCodec::decode_latent_tensor(const BitstreamFile& bs) const {
    if (bs.model_hash != hash())
        throw DecodeError("bitstream was coded with a different model (hash mismatch)");
    if (bs.channels != config.latent_channels) throw DecodeError("bitstream latent channels mismatch");
    Shape shape{1, bs.channels, bs.height, bs.width};
    std::vector<float> means, scales;
    for (int c = 0; c < config.latent_channels; ++c) {
        means.push_back(em_mean.at(static_cast<std::size_t>(c)));
        scales.push_back(std::exp(em_log_scale.at(static_cast<std::size_t>(c))));
    }
    LatentCode code = decode_latent(bs.payload, shape, means, scales);
    return code_to_tensor(code);
}

Image BaseCodec::decode_image(const BitstreamFile& bs) const {
    NoGradScope ng;
    return Image::from_tensor(synthesis(decode_latent_tensor(bs)));
}

BaseTrainResult train_base(const std::vector<Image>& dataset, const CodecConfig& config, int steps,
                           std::uint64_t seed, double lr) {
    config.validate();
    if (dataset.empty()) throw ConfigError("train_base: empty dataset");
    if (steps < 0) throw ConfigError("train_base: negative step count");

    Rng init_rng = Rng::derive(seed, 1);
    BaseTrainResult res;
    res.codec = BaseCodec::create(config, init_rng);
    BaseCodec& codec = res.codec;

    std::vector<Tensor> params;
    for (auto& [name, t] : codec.parameters()) params.push_back(t);
    AdamW::Config oc;
    oc.lr = static_cast<float>(lr);
    AdamW opt(params, oc);

    Rng data_rng = Rng::derive(seed, 2);
    Rng noise_rng = Rng::derive(seed, 3);

    for (int step = 1; step <= steps; ++step) {
        const Image& img = dataset[data_rng.below(dataset.size())];
        Tensor x = img.to_tensor();
        double pixels = static_cast<double>(img.height) * img.width;

        Tape tape;
        TapeScope ts(tape);
        Tensor y = codec.analysis(x);
        Tensor y_hat = quantize(y, QuantizeMode::train, noise_rng);
        Tensor bits = rate_estimate(y_hat, codec);
        Tensor x_hat = codec.synthesis(y_hat);

        Tensor dist = config.loss_kind == LossKind::distortion ? ops::mse(x, x_hat)
                                                               : pdist_graph(x, x_hat);
        double dist_scale = config.loss_kind == LossKind::distortion ? kDistortionScale : kPerceptionScale;
        Tensor loss = ops::add(ops::scale(bits, static_cast<float>(1.0 / pixels)),
                               ops::scale(dist, static_cast<float>(config.beta * dist_scale)));

        if (!std::isfinite(loss.item()))
            throw NumericError("train_base: non-finite loss at step " + std::to_string(step) +
                               " (bits=" + std::to_string(bits.item()) +
                               ", dist=" + std::to_string(dist.item()) + ")");

        opt.zero_grad();
        backward(loss, tape, params);
        opt.step();

        res.log.push_back({step, bits.item() / pixels, static_cast<double>(dist.item()),
                           static_cast<double>(loss.item())});
    }
    return res;
}

}  // namespace alf
