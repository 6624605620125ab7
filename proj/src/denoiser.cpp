#include "alf/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "alf/ops.hpp"
#include "json.hpp"

namespace alf {

namespace {

// 1x1 conv passing the latent through unchanged until training says otherwise.
nn::Conv2d identity_skip(int channels, Rng& rng) {
    nn::Conv2d c = nn::Conv2d::create(channels, channels, 1, 1, 0, rng);
    std::fill(c.w.data().begin(), c.w.data().end(), 0.0f);
    for (int i = 0; i < channels; ++i)
        c.w.data()[static_cast<std::size_t>(i) * channels + i] = 1.0f;
    std::fill(c.b.data().begin(), c.b.data().end(), 0.0f);
    return c;
}

}  // namespace

void DenoiserConfig::validate(int latent_channels) const {
    if (num_units < 1) throw ConfigError("denoiser: num_units must be >= 1");
    if (channels < latent_channels) throw ConfigError("denoiser: channels must be >= latent channels");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
        throw ConfigError("denoiser: time_embed_dim must be a positive even number");
}

DenoiserUnit DenoiserUnit::create(int channels, int time_dim, Rng& rng) {
    DenoiserUnit u;
    u.res1 = nn::TimeResBlock::create(channels, time_dim, rng);
    u.res2 = nn::TimeResBlock::create(channels, time_dim, rng);
    u.attn = nn::AttentionBlock::create(channels, rng);
    return u;
}

Tensor DenoiserUnit::forward(const Tensor& x, const Tensor& temb) const {
    return attn.forward(res2.forward(res1.forward(x, temb), temb));
}

void DenoiserUnit::collect(const std::string& prefix, nn::NamedTensors& out) const {
    res1.collect(prefix + "res1.", out);
    res2.collect(prefix + "res2.", out);
    attn.collect(prefix + "attn.", out);
}

Denoiser Denoiser::create(int latent_channels, const DenoiserConfig& config, Rng& rng) {
    config.validate(latent_channels);
    Denoiser d;
    d.config = config;
    d.latent_channels = latent_channels;
    d.temb1 = nn::Linear::create(config.time_embed_dim, config.channels, rng);
    d.temb2 = nn::Linear::create(config.channels, config.channels, rng);
    d.cond_in = nn::Conv2d::create(latent_channels, config.channels, 3, 1, 1, rng);
    d.trunk_in = nn::Conv2d::create(latent_channels, config.channels, 3, 1, 1, rng);
    d.fuse = nn::Conv2d::create(2 * config.channels, config.channels, 3, 1, 1, rng);
    d.cond_unit = DenoiserUnit::create(config.channels, config.channels, rng);
    for (int i = 0; i < config.num_units; ++i)
        d.units.push_back(DenoiserUnit::create(config.channels, config.channels, rng));
    d.out = nn::Conv2d::create(config.channels, latent_channels, 3, 1, 1, rng);
    d.skip = identity_skip(latent_channels, rng);
    return d;
}

Tensor Denoiser::time_embedding(float t_frac) const {
    Tensor e = nn::sinusoidal_time_embed({t_frac}, config.time_embed_dim);
    return temb2.forward(ops::leaky_relu(temb1.forward(e)));
}

Tensor Denoiser::forward(const Tensor& y_t, const Tensor& y_cond, float t_frac) const {
    if (!y_t.same_shape(y_cond))
        throw ShapeError("denoiser: noisy latent " + shape_str(y_t.shape()) + " vs condition " +
                         shape_str(y_cond.shape()));
    if (y_t.rank() != 4 || y_t.dim(1) != latent_channels)
        throw ShapeError("denoiser: expected [1," + std::to_string(latent_channels) + ",h,w] latents");
    Tensor temb = time_embedding(t_frac);
    Tensor cond = cond_unit.forward(ops::leaky_relu(cond_in.forward(y_cond)), temb);
    Tensor h = ops::leaky_relu(trunk_in.forward(y_t));
    h = ops::leaky_relu(fuse.forward(ops::concat_channels(h, cond)));
    for (const auto& unit : units) h = unit.forward(h, temb);
    return ops::add(out.forward(h), skip.forward(y_cond));
}

nn::NamedTensors Denoiser::parameters() const {
    nn::NamedTensors p;
    temb1.collect("denoiser.temb1.", p);
    temb2.collect("denoiser.temb2.", p);
    cond_in.collect("denoiser.cond_in.", p);
    trunk_in.collect("denoiser.trunk_in.", p);
    fuse.collect("denoiser.fuse.", p);
    cond_unit.collect("denoiser.cond_unit.", p);
    for (std::size_t i = 0; i < units.size(); ++i)
        units[i].collect("denoiser.unit" + std::to_string(i) + ".", p);
    out.collect("denoiser.out.", p);
    skip.collect("denoiser.skip.", p);
    return p;
}

namespace {

void restore_params(nn::NamedTensors params, const Checkpoint& ck) {
    for (auto& [name, t] : params) {
        Tensor stored = ck.find(name);
        if (!stored.same_shape(t))
            throw IoError("checkpoint tensor " + name + " has shape " + shape_str(stored.shape()) +
                          ", expected " + shape_str(t.shape()));
        t.impl()->data = stored.data();
    }
}

}  // namespace

Checkpoint Denoiser::to_checkpoint() const {
    Checkpoint ck;
    nlohmann::json meta;
    meta["kind"] = "denoiser";
    meta["latent_channels"] = latent_channels;
    meta["num_units"] = config.num_units;
    meta["channels"] = config.channels;
    meta["time_embed_dim"] = config.time_embed_dim;
    ck.metadata = meta.dump();
    ck.tensors = parameters();
    return ck;
}

Denoiser Denoiser::from_checkpoint(const Checkpoint& ck) {
    nlohmann::json meta = nlohmann::json::parse(ck.metadata);
    if (meta.value("kind", "") != "denoiser") throw IoError("checkpoint is not a denoiser");
    DenoiserConfig config;
    config.num_units = meta.at("num_units").get<int>();
    config.channels = meta.at("channels").get<int>();
    config.time_embed_dim = meta.at("time_embed_dim").get<int>();
    Rng rng(0);
    Denoiser d = create(meta.at("latent_channels").get<int>(), config, rng);
    restore_params(d.parameters(), ck);
    return d;
}

Variant1Translator Variant1Translator::create(int latent_channels, const DenoiserConfig& config,
                                              Rng& rng) {
    config.validate(latent_channels);
    Variant1Translator v;
    v.config = config;
    v.latent_channels = latent_channels;
    v.trunk_in = nn::Conv2d::create(latent_channels, config.channels, 3, 1, 1, rng);
    for (int i = 0; i < config.num_units; ++i)
        v.units.push_back(DenoiserUnit::create(config.channels, config.channels, rng));
    v.out = nn::Conv2d::create(config.channels, latent_channels, 3, 1, 1, rng);
    v.skip = identity_skip(latent_channels, rng);
    return v;
}

Tensor Variant1Translator::forward(const Tensor& y) const {
    if (y.rank() != 4 || y.dim(1) != latent_channels)
        throw ShapeError("variant1: expected [1," + std::to_string(latent_channels) + ",h,w] latent");
    Tensor temb = Tensor::zeros({1, config.channels});
    Tensor h = ops::leaky_relu(trunk_in.forward(y));
    for (const auto& unit : units) h = unit.forward(h, temb);
    return ops::add(out.forward(h), skip.forward(y));
}

nn::NamedTensors Variant1Translator::parameters() const {
    nn::NamedTensors p;
    trunk_in.collect("variant1.trunk_in.", p);
    for (std::size_t i = 0; i < units.size(); ++i)
        units[i].collect("variant1.unit" + std::to_string(i) + ".", p);
    out.collect("variant1.out.", p);
    skip.collect("variant1.skip.", p);
    return p;
}

Checkpoint Variant1Translator::to_checkpoint() const {
    Checkpoint ck;
    nlohmann::json meta;
    meta["kind"] = "variant1";
    meta["latent_channels"] = latent_channels;
    meta["num_units"] = config.num_units;
    meta["channels"] = config.channels;
    meta["time_embed_dim"] = config.time_embed_dim;
    ck.metadata = meta.dump();
    ck.tensors = parameters();
    return ck;
}

Variant1Translator Variant1Translator::from_checkpoint(const Checkpoint& ck) {
    nlohmann::json meta = nlohmann::json::parse(ck.metadata);
    if (meta.value("kind", "") != "variant1") throw IoError("checkpoint is not a variant1 translator");
    DenoiserConfig config;
    config.num_units = meta.at("num_units").get<int>();
    config.channels = meta.at("channels").get<int>();
    config.time_embed_dim = meta.at("time_embed_dim").get<int>();
    Rng rng(0);
    Variant1Translator v = create(meta.at("latent_channels").get<int>(), config, rng);
    restore_params(v.parameters(), ck);
    return v;
}

}  // namespace alf
