#include "alf/nn.hpp"

#include <cmath>

namespace alf::nn {

void kaiming_uniform(Tensor& w, int fan_in, Rng& rng, float slope) {
    float gain = std::sqrt(2.0f / (1.0f + slope * slope));
    float bound = gain * std::sqrt(3.0f / static_cast<float>(fan_in));
    for (float& v : w.data()) v = static_cast<float>(rng.uniform(-bound, bound));
}

Tensor gaussian_noise_like(const Tensor& t, Rng& rng) {
    Tensor n = Tensor::zeros(t.shape());
    for (float& v : n.data()) v = static_cast<float>(rng.normal());
    return n;
}

Tensor uniform_noise_like(const Tensor& t, Rng& rng, float lo, float hi) {
    Tensor n = Tensor::zeros(t.shape());
    for (float& v : n.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return n;
}

Conv2d Conv2d::create(int in_ch, int out_ch, int k, int stride, int padding, Rng& rng, bool zero_init) {
    Conv2d c;
    c.w = Tensor::zeros({out_ch, in_ch, k, k}, true);
    c.b = Tensor::zeros({out_ch}, true);
    c.stride = stride;
    c.padding = padding;
    if (!zero_init) kaiming_uniform(c.w, in_ch * k * k, rng);
    return c;
}

void Conv2d::collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + "w", w);
    out.emplace_back(prefix + "b", b);
}

ConvT2d ConvT2d::create(int in_ch, int out_ch, int k, int stride, int padding, Rng& rng) {
    ConvT2d c;
    c.w = Tensor::zeros({in_ch, out_ch, k, k}, true);
    c.b = Tensor::zeros({out_ch}, true);
    c.stride = stride;
    c.padding = padding;
    kaiming_uniform(c.w, in_ch * k * k, rng);
    return c;
}

void ConvT2d::collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + "w", w);
    out.emplace_back(prefix + "b", b);
}

Linear Linear::create(int in_dim, int out_dim, Rng& rng, bool zero_init) {
    Linear l;
    l.w = Tensor::zeros({out_dim, in_dim}, true);
    l.b = Tensor::zeros({out_dim}, true);
    if (!zero_init) kaiming_uniform(l.w, in_dim, rng);
    return l;
}

void Linear::collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + "w", w);
    out.emplace_back(prefix + "b", b);
}

GroupNorm GroupNorm::create(int channels, int groups) {
    GroupNorm g;
    g.gamma = Tensor::full({channels}, 1.0f, true);
    g.beta = Tensor::zeros({channels}, true);
    g.groups = groups;
    return g;
}

void GroupNorm::collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + "gamma", gamma);
    out.emplace_back(prefix + "beta", beta);
}

AttentionBlock AttentionBlock::create(int channels, Rng& rng) {
    AttentionBlock a;
    a.q = Conv2d::create(channels, channels, 1, 1, 0, rng);
    a.k = Conv2d::create(channels, channels, 1, 1, 0, rng);
    a.v = Conv2d::create(channels, channels, 1, 1, 0, rng);
    return a;
}

Tensor AttentionBlock::forward(const Tensor& x) const {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int P = H * W;
    Tensor qf = ops::reshape(q.forward(x), {N, C, P});
    Tensor kf = ops::reshape(k.forward(x), {N, C, P});
    Tensor vf = ops::reshape(v.forward(x), {N, C, P});
    Tensor scores = ops::bmm(ops::transpose_last2(qf), kf);  // [N,P,P], row = query position
    scores = ops::scale(scores, 1.0f / std::sqrt(static_cast<float>(C)));
    Tensor attn = ops::softmax_lastdim(scores);
    Tensor mixed = ops::bmm(vf, ops::transpose_last2(attn));  // [N,C,P]
    return ops::add(x, ops::reshape(mixed, {N, C, H, W}));
}

void AttentionBlock::collect(const std::string& prefix, NamedTensors& out) const {
    q.collect(prefix + "q.", out);
    k.collect(prefix + "k.", out);
    v.collect(prefix + "v.", out);
}

TimeResBlock TimeResBlock::create(int channels, int time_dim, Rng& rng) {
    TimeResBlock b;
    b.norm = GroupNorm::create(channels, 4);
    b.time_proj = Linear::create(time_dim, channels, rng);
    b.conv1 = Conv2d::create(channels, channels, 3, 1, 1, rng);
    b.conv2 = Conv2d::create(channels, channels, 3, 1, 1, rng, /*zero_init=*/true);
    return b;
}

Tensor TimeResBlock::forward(const Tensor& x, const Tensor& time_embed) const {
    Tensor t_bias = time_proj.forward(time_embed);  // [N,C]
    Tensor h = ops::add_bias_nc(norm.forward(x), t_bias);
    h = conv2.forward(ops::leaky_relu(conv1.forward(h)));
    return ops::add(x, h);
}

void TimeResBlock::collect(const std::string& prefix, NamedTensors& out) const {
    norm.collect(prefix + "norm.", out);
    time_proj.collect(prefix + "time_proj.", out);
    conv1.collect(prefix + "conv1.", out);
    conv2.collect(prefix + "conv2.", out);
}

Tensor sinusoidal_time_embed(const std::vector<float>& t_frac, int dim) {
    if (dim % 2 != 0) throw ShapeError("sinusoidal_time_embed: dim must be even");
    const int half = dim / 2;
    const int N = static_cast<int>(t_frac.size());
    Tensor out = Tensor::zeros({N, dim});
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < half; ++i) {
            double freq = std::pow(10000.0, static_cast<double>(i) / std::max(1, half - 1));
            double a = static_cast<double>(t_frac[static_cast<std::size_t>(n)]) * freq;
            out.at(static_cast<std::size_t>(n) * dim + i) = static_cast<float>(std::sin(a));
            out.at(static_cast<std::size_t>(n) * dim + half + i) = static_cast<float>(std::cos(a));
        }
    return out;
}

}  // namespace alf::nn
