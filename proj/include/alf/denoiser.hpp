#pragma once

#include <vector>

#include "alf/nn.hpp"
#include "alf/rng.hpp"
#include "alf/serialize.hpp"
#include "alf/tensor.hpp"

namespace alf {

struct DenoiserConfig {
    int num_units = 2;       // M
    int channels = 64;
    int time_embed_dim = 32;

    void validate(int latent_channels) const;  // throws ConfigError
};

// Two time-aware residual blocks followed by self-attention.
struct DenoiserUnit {
    nn::TimeResBlock res1, res2;
    nn::AttentionBlock attn;

    static DenoiserUnit create(int channels, int time_dim, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& temb) const;
    void collect(const std::string& prefix, nn::NamedTensors& out) const;
};

// Conditional latent predictor D(y_t, y_cond, t/T): the condition latent runs
// through its own unit, is concatenated into the trunk, then M units and a
// final conv map back to latent channels. Predicts the clean target directly;
// an identity-initialized 1x1 skip from the condition latent anchors the
// prediction there so the trunk only has to learn the correction.
struct Denoiser {
    DenoiserConfig config;
    int latent_channels = 0;
    nn::Linear temb1, temb2;  // sinusoidal embedding -> channels
    nn::Conv2d cond_in, trunk_in, fuse;
    DenoiserUnit cond_unit;
    std::vector<DenoiserUnit> units;
    nn::Conv2d out;
    nn::Conv2d skip;  // 1x1, identity-initialized

    static Denoiser create(int latent_channels, const DenoiserConfig& config, Rng& rng);

    Tensor time_embedding(float t_frac) const;  // [1, channels]
    Tensor forward(const Tensor& y_t, const Tensor& y_cond, float t_frac) const;

    nn::NamedTensors parameters() const;  // "denoiser.*"
    Checkpoint to_checkpoint() const;
    static Denoiser from_checkpoint(const Checkpoint& ck);
};

// Ablation baseline: the same trunk without time conditioning or a condition
// branch; a single feed-forward latent-to-latent translation.
struct Variant1Translator {
    DenoiserConfig config;
    int latent_channels = 0;
    nn::Conv2d trunk_in;
    std::vector<DenoiserUnit> units;
    nn::Conv2d out;
    nn::Conv2d skip;  // 1x1, identity-initialized

    static Variant1Translator create(int latent_channels, const DenoiserConfig& config, Rng& rng);
    Tensor forward(const Tensor& y) const;

    nn::NamedTensors parameters() const;  // "variant1.*"
    Checkpoint to_checkpoint() const;
    static Variant1Translator from_checkpoint(const Checkpoint& ck);
};

}  // namespace alf
