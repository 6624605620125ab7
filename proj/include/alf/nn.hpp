#pragma once

#include <string>
#include <utility>
#include <vector>

#include "alf/ops.hpp"
#include "alf/rng.hpp"
#include "alf/tensor.hpp"

namespace alf::nn {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Kaiming-uniform fill for convolution / dense weights (leaky-relu gain).
void kaiming_uniform(Tensor& w, int fan_in, Rng& rng, float slope = 0.2f);

Tensor gaussian_noise_like(const Tensor& t, Rng& rng);
Tensor uniform_noise_like(const Tensor& t, Rng& rng, float lo, float hi);

struct Conv2d {
    Tensor w;  // [O,C,k,k]
    Tensor b;  // [O]
    int stride = 1;
    int padding = 0;

    static Conv2d create(int in_ch, int out_ch, int k, int stride, int padding, Rng& rng,
                         bool zero_init = false);
    Tensor forward(const Tensor& x) const { return ops::add_bias_nchw(ops::conv2d(x, w, stride, padding), b); }
    void collect(const std::string& prefix, NamedTensors& out) const;
};

struct ConvT2d {
    Tensor w;  // [I,O,k,k], input channels map down to O
    Tensor b;  // [O]
    int stride = 1;
    int padding = 0;

    static ConvT2d create(int in_ch, int out_ch, int k, int stride, int padding, Rng& rng);
    Tensor forward(const Tensor& x) const {
        return ops::add_bias_nchw(ops::conv2d_transpose(x, w, stride, padding), b);
    }
    void collect(const std::string& prefix, NamedTensors& out) const;
};

struct Linear {
    Tensor w;  // [O,D]
    Tensor b;  // [O]

    static Linear create(int in_dim, int out_dim, Rng& rng, bool zero_init = false);
    Tensor forward(const Tensor& x) const { return ops::linear(x, w, b); }
    void collect(const std::string& prefix, NamedTensors& out) const;
};

struct GroupNorm {
    Tensor gamma;  // [C]
    Tensor beta;   // [C]
    int groups = 4;

    static GroupNorm create(int channels, int groups);
    Tensor forward(const Tensor& x) const { return ops::group_norm(x, gamma, beta, groups); }
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Single-head self-attention over the H*W positions with a residual skip:
//   out = x + V softmax(Q^T K / sqrt(C))^T
struct AttentionBlock {
    Conv2d q, k, v;  // 1x1 projections

    static AttentionBlock create(int channels, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// out = x + conv2(lrelu(conv1(groupnorm(x) + t_bias))); conv2 is zero-init so
// the block is the identity at initialization.
struct TimeResBlock {
    GroupNorm norm;
    Linear time_proj;  // time embedding -> C
    Conv2d conv1, conv2;

    static TimeResBlock create(int channels, int time_dim, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& time_embed) const;  // time_embed [N,time_dim]
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Sinusoidal embedding of a pseudo-continuous noise level in [0,1]; dim must be even.
Tensor sinusoidal_time_embed(const std::vector<float>& t_frac, int dim);

}  // namespace alf::nn
