#pragma once

#include "alf/tensor.hpp"

namespace alf::ops {

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor add_scalar(const Tensor& a, float c);
Tensor leaky_relu(const Tensor& x, float slope = 0.2f);

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);          // [M,K] x [K,N]
Tensor bmm(const Tensor& a, const Tensor& b);             // [B,M,K] x [B,K,N]
Tensor transpose_last2(const Tensor& a);                  // rank >= 2
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x[N,D], w[O,D], b[O]

// Shape
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat_channels(const Tensor& a, const Tensor& b);  // NCHW, axis 1
Tensor detach(const Tensor& a);

// Convolution. x[N,C,H,W], w[O,C,k,k]; transpose maps O channels back to C
// and is the exact adjoint of conv2d under a shared kernel.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding);
Tensor conv2d_transpose(const Tensor& x, const Tensor& w, int stride, int padding);
Tensor add_bias_nchw(const Tensor& x, const Tensor& b);  // b[C]
Tensor add_bias_nc(const Tensor& x, const Tensor& b);    // b[N,C], broadcast over H,W

// Normalization / attention pieces
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  float eps = 1e-5f);
Tensor softmax_lastdim(const Tensor& x);
Tensor channel_l2_normalize(const Tensor& x, float eps = 1e-6f);  // unit norm across C per (n,h,w)

// Reductions
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);

// Quantization: round half away from zero, identity (straight-through) gradient.
Tensor round_ste(const Tensor& x);

// Per-element coding cost in bits under a per-channel discretized Gaussian:
// bits = -log2( Phi((y - mean + 0.5)/sigma) - Phi((y - mean - 0.5)/sigma) ),
// sigma = exp(log_scale). Differentiable w.r.t. y, mean and log_scale.
Tensor gaussian_bits(const Tensor& y, const Tensor& mean, const Tensor& log_scale);

}  // namespace alf::ops
