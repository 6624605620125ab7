#include "alf/ops.hpp"

#include <cmath>

namespace alf::ops {

namespace {

bool tracked(std::initializer_list<const Tensor*> ins) {
    if (!active_tape()) return false;
    for (const Tensor* t : ins)
        if (t->requires_grad()) return true;
    return false;
}

Tensor make_out(const Shape& shape, bool requires_grad) {
    Tensor t = Tensor::zeros(shape);
    t.set_requires_grad(requires_grad);
    return t;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Gaussian CDF / PDF used by gaussian_bits.
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }
inline double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    bool rec = tracked({&a, &b});
    Tensor out = make_out(a.shape(), rec);
    for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) + b.at(i);
    if (rec) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        active_tape()->record([ai, bi, oi] {
            if (oi->grad.empty()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] += oi->grad[i];
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    bool rec = tracked({&a, &b});
    Tensor out = make_out(a.shape(), rec);
    for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) - b.at(i);
    if (rec) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        active_tape()->record([ai, bi, oi] {
            if (oi->grad.empty()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] -= oi->grad[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    bool rec = tracked({&a, &b});
    Tensor out = make_out(a.shape(), rec);
    for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * b.at(i);
    if (rec) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        active_tape()->record([ai, bi, oi] {
            if (oi->grad.empty()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * bi->data[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] += oi->grad[i] * ai->data[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, float c) {
    bool rec = tracked({&a});
    Tensor out = make_out(a.shape(), rec);
    for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * c;
    if (rec) {
        auto ai = a.impl();
        auto oi = out.impl();
        active_tape()->record([ai, oi, c] {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ai->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * c;
        });
    }
    return out;
}

Tensor add_scalar(const Tensor& a, float c) {
    bool rec = tracked({&a});
    Tensor out = make_out(a.shape(), rec);
    for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) + c;
    if (rec) {
        auto ai = a.impl();
        auto oi = out.impl();
        active_tape()->record([ai, oi] {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ai->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
        });
    }
    return out;
}

Tensor leaky_relu(const Tensor& x, float slope) {
    bool rec = tracked({&x});
    Tensor out = make_out(x.shape(), rec);
    for (std::size_t i = 0; i < x.size(); ++i) {
        float v = x.at(i);
        out.at(i) = v >= 0.0f ? v : slope * v;
    }
    if (rec) {
        auto xi = x.impl();
        auto oi = out.impl();
        active_tape()->record([xi, oi, slope] {
            if (oi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i)
                xi->grad[i] += oi->grad[i] * (xi->data[i] >= 0.0f ? 1.0f : slope);
        });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
    bool rec = tracked({&a, &b});
    Tensor out = make_out({M, N}, rec);
    for (int m = 0; m < M; ++m)
        for (int k = 0; k < K; ++k) {
            float av = a.at(static_cast<std::size_t>(m) * K + k);
            if (av == 0.0f) continue;
            for (int n = 0; n < N; ++n)
                out.at(static_cast<std::size_t>(m) * N + n) += av * b.at(static_cast<std::size_t>(k) * N + n);
        }
    if (rec) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        active_tape()->record([ai, bi, oi, M, K, N] {
            if (oi->grad.empty()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (int m = 0; m < M; ++m)
                    for (int n = 0; n < N; ++n) {
                        float g = oi->grad[static_cast<std::size_t>(m) * N + n];
                        for (int k = 0; k < K; ++k)
                            ai->grad[static_cast<std::size_t>(m) * K + k] +=
                                g * bi->data[static_cast<std::size_t>(k) * N + n];
                    }
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int m = 0; m < M; ++m)
                    for (int k = 0; k < K; ++k) {
                        float av = ai->data[static_cast<std::size_t>(m) * K + k];
                        for (int n = 0; n < N; ++n)
                            bi->grad[static_cast<std::size_t>(k) * N + n] +=
                                av * oi->grad[static_cast<std::size_t>(m) * N + n];
                    }
            }
        });
    }
    return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw ShapeError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
    bool rec = tracked({&a, &b});
    Tensor out = make_out({B, M, N}, rec);
    auto ixa = [=](int i, int m, int k) { return (static_cast<std::size_t>(i) * M + m) * K + k; };
    auto ixb = [=](int i, int k, int n) { return (static_cast<std::size_t>(i) * K + k) * N + n; };
    auto ixo = [=](int i, int m, int n) { return (static_cast<std::size_t>(i) * M + m) * N + n; };
    for (int i = 0; i < B; ++i)
        for (int m = 0; m < M; ++m)
            for (int k = 0; k < K; ++k) {
                float av = a.at(ixa(i, m, k));
                if (av == 0.0f) continue;
                for (int n = 0; n < N; ++n) out.at(ixo(i, m, n)) += av * b.at(ixb(i, k, n));
            }
    if (rec) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        active_tape()->record([ai, bi, oi, B, M, K, N, ixa, ixb, ixo] {
            if (oi->grad.empty()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (int i = 0; i < B; ++i)
                    for (int m = 0; m < M; ++m)
                        for (int n = 0; n < N; ++n) {
                            float g = oi->grad[ixo(i, m, n)];
                            for (int k = 0; k < K; ++k) ai->grad[ixa(i, m, k)] += g * bi->data[ixb(i, k, n)];
                        }
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int i = 0; i < B; ++i)
                    for (int m = 0; m < M; ++m)
                        for (int k = 0; k < K; ++k) {
                            float av = ai->data[ixa(i, m, k)];
                            for (int n = 0; n < N; ++n)
                                bi->grad[ixb(i, k, n)] += av * oi->grad[ixo(i, m, n)];
                        }
            }
        });
    }
    return out;
}

Tensor transpose_last2(const Tensor& a) {
    if (a.rank() < 2) throw ShapeError("transpose_last2 needs rank >= 2");
    Shape s = a.shape();
    const int R = a.dim(a.rank() - 2), C = a.dim(a.rank() - 1);
    std::swap(s[s.size() - 2], s[s.size() - 1]);
    const std::size_t batch = a.size() / (static_cast<std::size_t>(R) * C);
    bool rec = tracked({&a});
    Tensor out = make_out(s, rec);
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t base = b * static_cast<std::size_t>(R) * C;
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c)
                out.at(base + static_cast<std::size_t>(c) * R + r) = a.at(base + static_cast<std::size_t>(r) * C + c);
    }
    if (rec) {
        auto ai = a.impl();
        auto oi = out.impl();
        active_tape()->record([ai, oi, R, C, batch] {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ai->ensure_grad();
            for (std::size_t b = 0; b < batch; ++b) {
                std::size_t base = b * static_cast<std::size_t>(R) * C;
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < C; ++c)
                        ai->grad[base + static_cast<std::size_t>(r) * C + c] +=
                            oi->grad[base + static_cast<std::size_t>(c) * R + r];
            }
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(1) || w.dim(0) != b.dim(0))
        throw ShapeError("linear: x" + shape_str(x.shape()) + " w" + shape_str(w.shape()) + " b" +
                         shape_str(b.shape()));
    const int N = x.dim(0), D = x.dim(1), O = w.dim(0);
    bool rec = tracked({&x, &w, &b});
    Tensor out = make_out({N, O}, rec);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o) {
            float acc = b.at(static_cast<std::size_t>(o));
            for (int d = 0; d < D; ++d)
                acc += x.at(static_cast<std::size_t>(n) * D + d) * w.at(static_cast<std::size_t>(o) * D + d);
            out.at(static_cast<std::size_t>(n) * O + o) = acc;
        }
    if (rec) {
        auto xi = x.impl(), wi = w.impl(), bi = b.impl(), oi = out.impl();
        active_tape()->record([xi, wi, bi, oi, N, D, O] {
            if (oi->grad.empty()) return;
            if (xi->requires_grad) xi->ensure_grad();
            if (wi->requires_grad) wi->ensure_grad();
            if (bi->requires_grad) bi->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int o = 0; o < O; ++o) {
                    float g = oi->grad[static_cast<std::size_t>(n) * O + o];
                    if (g == 0.0f) continue;
                    if (bi->requires_grad) bi->grad[static_cast<std::size_t>(o)] += g;
                    for (int d = 0; d < D; ++d) {
                        if (xi->requires_grad)
                            xi->grad[static_cast<std::size_t>(n) * D + d] +=
                                g * wi->data[static_cast<std::size_t>(o) * D + d];
                        if (wi->requires_grad)
                            wi->grad[static_cast<std::size_t>(o) * D + d] +=
                                g * xi->data[static_cast<std::size_t>(n) * D + d];
                    }
                }
        });
    }
    return out;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    if (numel(shape) != a.size())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    bool rec = tracked({&a});
    Tensor out = make_out(shape, rec);
    out.data() = a.data();
    if (rec) {
        auto ai = a.impl();
        auto oi = out.impl();
        active_tape()->record([ai, oi] {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ai->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
        });
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw ShapeError("concat_channels: " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    bool rec = tracked({&a, &b});
    Tensor out = make_out({N, Ca + Cb, H, W}, rec);
    for (int n = 0; n < N; ++n) {
        std::size_t oa = static_cast<std::size_t>(n) * (Ca + Cb) * hw;
        std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(n) * Ca * hw),
                    static_cast<std::size_t>(Ca) * hw, out.data().begin() + static_cast<std::ptrdiff_t>(oa));
        std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(n) * Cb * hw),
                    static_cast<std::size_t>(Cb) * hw,
                    out.data().begin() + static_cast<std::ptrdiff_t>(oa + static_cast<std::size_t>(Ca) * hw));
    }
    if (rec) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        active_tape()->record([ai, bi, oi, N, Ca, Cb, hw] {
            if (oi->grad.empty()) return;
            for (int n = 0; n < N; ++n) {
                std::size_t oa = static_cast<std::size_t>(n) * (Ca + Cb) * hw;
                if (ai->requires_grad) {
                    ai->ensure_grad();
                    for (std::size_t i = 0; i < static_cast<std::size_t>(Ca) * hw; ++i)
                        ai->grad[static_cast<std::size_t>(n) * Ca * hw + i] += oi->grad[oa + i];
                }
                if (bi->requires_grad) {
                    bi->ensure_grad();
                    for (std::size_t i = 0; i < static_cast<std::size_t>(Cb) * hw; ++i)
                        bi->grad[static_cast<std::size_t>(n) * Cb * hw + i] +=
                            oi->grad[oa + static_cast<std::size_t>(Ca) * hw + i];
                }
            }
        });
    }
    return out;
}

Tensor detach(const Tensor& a) {
    Tensor out = Tensor::from_data(a.shape(), a.data());
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding) {
    if (x.rank() != 4 || w.rank() != 4) throw ShapeError("conv2d expects NCHW input and OCkk kernel");
    if (x.dim(1) != w.dim(1))
        throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) + " != kernel channels " +
                         std::to_string(w.dim(1)));
    if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: non-square kernel");
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), K = w.dim(2);
    if (K > H + 2 * padding || K > W + 2 * padding) throw ShapeError("conv2d: kernel larger than padded input");
    const int OH = (H + 2 * padding - K) / stride + 1;
    const int OW = (W + 2 * padding - K) / stride + 1;
    bool rec = tracked({&x, &w});
    Tensor out = make_out({N, O, OH, OW}, rec);
    const float* xd = x.data().data();
    const float* wd = w.data().data();
    float* od = out.data().data();
    auto xix = [=](int n, int c, int h, int ww) {
        return ((static_cast<std::size_t>(n) * C + c) * H + h) * W + ww;
    };
    auto wix = [=](int o, int c, int kh, int kw) {
        return ((static_cast<std::size_t>(o) * C + c) * K + kh) * K + kw;
    };
    auto oix = [=](int n, int o, int oh, int ow) {
        return ((static_cast<std::size_t>(n) * O + o) * OH + oh) * OW + ow;
    };
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    float acc = 0.0f;
                    for (int c = 0; c < C; ++c)
                        for (int kh = 0; kh < K; ++kh) {
                            int ih = oh * stride - padding + kh;
                            if (ih < 0 || ih >= H) continue;
                            for (int kw = 0; kw < K; ++kw) {
                                int iw = ow * stride - padding + kw;
                                if (iw < 0 || iw >= W) continue;
                                acc += xd[xix(n, c, ih, iw)] * wd[wix(o, c, kh, kw)];
                            }
                        }
                    od[oix(n, o, oh, ow)] = acc;
                }
    if (rec) {
        auto xi = x.impl(), wi = w.impl(), oi = out.impl();
        active_tape()->record([xi, wi, oi, N, C, H, W, O, K, OH, OW, stride, padding, xix, wix, oix] {
            if (oi->grad.empty()) return;
            if (xi->requires_grad) xi->ensure_grad();
            if (wi->requires_grad) wi->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int o = 0; o < O; ++o)
                    for (int oh = 0; oh < OH; ++oh)
                        for (int ow = 0; ow < OW; ++ow) {
                            float g = oi->grad[oix(n, o, oh, ow)];
                            if (g == 0.0f) continue;
                            for (int c = 0; c < C; ++c)
                                for (int kh = 0; kh < K; ++kh) {
                                    int ih = oh * stride - padding + kh;
                                    if (ih < 0 || ih >= H) continue;
                                    for (int kw = 0; kw < K; ++kw) {
                                        int iw = ow * stride - padding + kw;
                                        if (iw < 0 || iw >= W) continue;
                                        if (xi->requires_grad)
                                            xi->grad[xix(n, c, ih, iw)] += g * wi->data[wix(o, c, kh, kw)];
                                        if (wi->requires_grad)
                                            wi->grad[wix(o, c, kh, kw)] += g * xi->data[xix(n, c, ih, iw)];
                                    }
                                }
                        }
        });
    }
    return out;
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& w, int stride, int padding) {
    if (x.rank() != 4 || w.rank() != 4) throw ShapeError("conv2d_transpose expects NCHW input and OCkk kernel");
    if (x.dim(1) != w.dim(0))
        throw ShapeError("conv2d_transpose: input channels " + std::to_string(x.dim(1)) +
                         " != kernel output channels " + std::to_string(w.dim(0)));
    if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d_transpose: non-square kernel");
    if (stride < 1) throw ShapeError("conv2d_transpose: stride must be >= 1");
    const int N = x.dim(0), O = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int C = w.dim(1), K = w.dim(2);
    const int OH = (H - 1) * stride - 2 * padding + K;
    const int OW = (W - 1) * stride - 2 * padding + K;
    if (OH < 1 || OW < 1) throw ShapeError("conv2d_transpose: empty output");
    bool rec = tracked({&x, &w});
    Tensor out = make_out({N, C, OH, OW}, rec);
    auto xix = [=](int n, int o, int h, int ww) {
        return ((static_cast<std::size_t>(n) * O + o) * H + h) * W + ww;
    };
    auto wix = [=](int o, int c, int kh, int kw) {
        return ((static_cast<std::size_t>(o) * C + c) * K + kh) * K + kw;
    };
    auto oix = [=](int n, int c, int h, int ww) {
        return ((static_cast<std::size_t>(n) * C + c) * OH + h) * OW + ww;
    };
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int h = 0; h < H; ++h)
                for (int ww = 0; ww < W; ++ww) {
                    float v = x.at(xix(n, o, h, ww));
                    if (v == 0.0f) continue;
                    for (int c = 0; c < C; ++c)
                        for (int kh = 0; kh < K; ++kh) {
                            int gh = h * stride - padding + kh;
                            if (gh < 0 || gh >= OH) continue;
                            for (int kw = 0; kw < K; ++kw) {
                                int gw = ww * stride - padding + kw;
                                if (gw < 0 || gw >= OW) continue;
                                out.at(oix(n, c, gh, gw)) += v * w.at(wix(o, c, kh, kw));
                            }
                        }
                }
    if (rec) {
        auto xi = x.impl(), wi = w.impl(), oi = out.impl();
        active_tape()->record([xi, wi, oi, N, O, H, W, C, K, OH, OW, stride, padding, xix, wix, oix] {
            if (oi->grad.empty()) return;
            if (xi->requires_grad) xi->ensure_grad();
            if (wi->requires_grad) wi->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int o = 0; o < O; ++o)
                    for (int h = 0; h < H; ++h)
                        for (int ww = 0; ww < W; ++ww) {
                            float xv = xi->data[xix(n, o, h, ww)];
                            float gx = 0.0f;
                            for (int c = 0; c < C; ++c)
                                for (int kh = 0; kh < K; ++kh) {
                                    int gh = h * stride - padding + kh;
                                    if (gh < 0 || gh >= OH) continue;
                                    for (int kw = 0; kw < K; ++kw) {
                                        int gw = ww * stride - padding + kw;
                                        if (gw < 0 || gw >= OW) continue;
                                        float g = oi->grad[oix(n, c, gh, gw)];
                                        gx += g * wi->data[wix(o, c, kh, kw)];
                                        if (wi->requires_grad) wi->grad[wix(o, c, kh, kw)] += g * xv;
                                    }
                                }
                            if (xi->requires_grad) xi->grad[xix(n, o, h, ww)] += gx;
                        }
        });
    }
    return out;
}

Tensor add_bias_nchw(const Tensor& x, const Tensor& b) {
    if (x.rank() != 4 || b.rank() != 1 || b.dim(0) != x.dim(1))
        throw ShapeError("add_bias_nchw: x" + shape_str(x.shape()) + " b" + shape_str(b.shape()));
    const int N = x.dim(0), C = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    bool rec = tracked({&x, &b});
    Tensor out = make_out(x.shape(), rec);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            std::size_t base = (static_cast<std::size_t>(n) * C + c) * hw;
            float bv = b.at(static_cast<std::size_t>(c));
            for (std::size_t i = 0; i < hw; ++i) out.at(base + i) = x.at(base + i) + bv;
        }
    if (rec) {
        auto xi = x.impl(), bi = b.impl(), oi = out.impl();
        active_tape()->record([xi, bi, oi, N, C, hw] {
            if (oi->grad.empty()) return;
            if (xi->requires_grad) {
                xi->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < C; ++c) {
                        std::size_t base = (static_cast<std::size_t>(n) * C + c) * hw;
                        float acc = 0.0f;
                        for (std::size_t i = 0; i < hw; ++i) acc += oi->grad[base + i];
                        bi->grad[static_cast<std::size_t>(c)] += acc;
                    }
            }
        });
    }
    return out;
}

Tensor add_bias_nc(const Tensor& x, const Tensor& b) {
    if (x.rank() != 4 || b.rank() != 2 || b.dim(0) != x.dim(0) || b.dim(1) != x.dim(1))
        throw ShapeError("add_bias_nc: x" + shape_str(x.shape()) + " b" + shape_str(b.shape()));
    const int N = x.dim(0), C = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    bool rec = tracked({&x, &b});
    Tensor out = make_out(x.shape(), rec);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            std::size_t base = (static_cast<std::size_t>(n) * C + c) * hw;
            float bv = b.at(static_cast<std::size_t>(n) * C + c);
            for (std::size_t i = 0; i < hw; ++i) out.at(base + i) = x.at(base + i) + bv;
        }
    if (rec) {
        auto xi = x.impl(), bi = b.impl(), oi = out.impl();
        active_tape()->record([xi, bi, oi, N, C, hw] {
            if (oi->grad.empty()) return;
            if (xi->requires_grad) {
                xi->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < C; ++c) {
                        std::size_t base = (static_cast<std::size_t>(n) * C + c) * hw;
                        float acc = 0.0f;
                        for (std::size_t i = 0; i < hw; ++i) acc += oi->grad[base + i];
                        bi->grad[static_cast<std::size_t>(n) * C + c] += acc;
                    }
            }
        });
    }
    return out;
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups, float eps) {
    if (x.rank() != 4) throw ShapeError("group_norm expects NCHW");
    const int N = x.dim(0), C = x.dim(1);
    if (groups < 1 || C % groups != 0)
        throw ShapeError("group_norm: channels " + std::to_string(C) + " not divisible by groups " +
                         std::to_string(groups));
    if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C)
        throw ShapeError("group_norm: gamma/beta must be [C]");
    const int CG = C / groups;
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    const std::size_t gsize = static_cast<std::size_t>(CG) * hw;
    bool rec = tracked({&x, &gamma, &beta});
    Tensor out = make_out(x.shape(), rec);
    // xhat cached for backward
    auto xhat = std::make_shared<std::vector<float>>(x.size());
    auto inv_std = std::make_shared<std::vector<float>>(static_cast<std::size_t>(N) * groups);
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < groups; ++g) {
            std::size_t base = (static_cast<std::size_t>(n) * C + static_cast<std::size_t>(g) * CG) * hw;
            double mean = 0.0;
            for (std::size_t i = 0; i < gsize; ++i) mean += x.at(base + i);
            mean /= static_cast<double>(gsize);
            double var = 0.0;
            for (std::size_t i = 0; i < gsize; ++i) {
                double d = x.at(base + i) - mean;
                var += d * d;
            }
            var /= static_cast<double>(gsize);
            float istd = static_cast<float>(1.0 / std::sqrt(var + eps));
            (*inv_std)[static_cast<std::size_t>(n) * groups + g] = istd;
            for (int cg = 0; cg < CG; ++cg) {
                int c = g * CG + cg;
                float gm = gamma.at(static_cast<std::size_t>(c));
                float bt = beta.at(static_cast<std::size_t>(c));
                std::size_t cbase = base + static_cast<std::size_t>(cg) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    float xh = (x.at(cbase + i) - static_cast<float>(mean)) * istd;
                    (*xhat)[cbase + i] = xh;
                    out.at(cbase + i) = gm * xh + bt;
                }
            }
        }
    if (rec) {
        auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
        active_tape()->record([xi, gi, bi, oi, xhat, inv_std, N, C, CG, groups, hw, gsize] {
            if (oi->grad.empty()) return;
            if (gi->requires_grad) gi->ensure_grad();
            if (bi->requires_grad) bi->ensure_grad();
            if (xi->requires_grad) xi->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int g = 0; g < groups; ++g) {
                    std::size_t base = (static_cast<std::size_t>(n) * C + static_cast<std::size_t>(g) * CG) * hw;
                    float istd = (*inv_std)[static_cast<std::size_t>(n) * groups + g];
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (int cg = 0; cg < CG; ++cg) {
                        int c = g * CG + cg;
                        float gm = gi->data[static_cast<std::size_t>(c)];
                        std::size_t cbase = base + static_cast<std::size_t>(cg) * hw;
                        double dg = 0.0, db = 0.0;
                        for (std::size_t i = 0; i < hw; ++i) {
                            float go = oi->grad[cbase + i];
                            float xh = (*xhat)[cbase + i];
                            dg += static_cast<double>(go) * xh;
                            db += go;
                            float dxh = go * gm;
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += static_cast<double>(dxh) * xh;
                        }
                        if (gi->requires_grad) gi->grad[static_cast<std::size_t>(c)] += static_cast<float>(dg);
                        if (bi->requires_grad) bi->grad[static_cast<std::size_t>(c)] += static_cast<float>(db);
                    }
                    if (xi->requires_grad) {
                        float m1 = static_cast<float>(sum_dxhat / static_cast<double>(gsize));
                        float m2 = static_cast<float>(sum_dxhat_xhat / static_cast<double>(gsize));
                        for (int cg = 0; cg < CG; ++cg) {
                            int c = g * CG + cg;
                            float gm = gi->data[static_cast<std::size_t>(c)];
                            std::size_t cbase = base + static_cast<std::size_t>(cg) * hw;
                            for (std::size_t i = 0; i < hw; ++i) {
                                float dxh = oi->grad[cbase + i] * gm;
                                float xh = (*xhat)[cbase + i];
                                xi->grad[cbase + i] += istd * (dxh - m1 - xh * m2);
                            }
                        }
                    }
                }
        });
    }
    return out;
}

Tensor softmax_lastdim(const Tensor& x) {
    if (x.rank() < 1) throw ShapeError("softmax_lastdim on empty tensor");
    const int L = x.dim(x.rank() - 1);
    const std::size_t rows = x.size() / static_cast<std::size_t>(L);
    bool rec = tracked({&x});
    Tensor out = make_out(x.shape(), rec);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t base = r * static_cast<std::size_t>(L);
        float mx = x.at(base);
        for (int i = 1; i < L; ++i) mx = std::max(mx, x.at(base + i));
        double sum = 0.0;
        for (int i = 0; i < L; ++i) {
            float e = std::exp(x.at(base + i) - mx);
            out.at(base + i) = e;
            sum += e;
        }
        float inv = static_cast<float>(1.0 / sum);
        for (int i = 0; i < L; ++i) out.at(base + i) *= inv;
    }
    if (rec) {
        auto xi = x.impl();
        auto oi = out.impl();
        active_tape()->record([xi, oi, L, rows] {
            if (oi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                std::size_t base = r * static_cast<std::size_t>(L);
                double dot = 0.0;
                for (int i = 0; i < L; ++i) dot += static_cast<double>(oi->grad[base + i]) * oi->data[base + i];
                for (int i = 0; i < L; ++i)
                    xi->grad[base + i] +=
                        oi->data[base + i] * (oi->grad[base + i] - static_cast<float>(dot));
            }
        });
    }
    return out;
}

Tensor channel_l2_normalize(const Tensor& x, float eps) {
    if (x.rank() != 4) throw ShapeError("channel_l2_normalize expects NCHW");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    bool rec = tracked({&x});
    Tensor out = make_out(x.shape(), rec);
    auto inv_r = std::make_shared<std::vector<float>>(static_cast<std::size_t>(N) * hw);
    for (int n = 0; n < N; ++n)
        for (std::size_t p = 0; p < hw; ++p) {
            double ss = eps;
            for (int c = 0; c < C; ++c) {
                float v = x.at((static_cast<std::size_t>(n) * C + c) * hw + p);
                ss += static_cast<double>(v) * v;
            }
            float ir = static_cast<float>(1.0 / std::sqrt(ss));
            (*inv_r)[static_cast<std::size_t>(n) * hw + p] = ir;
            for (int c = 0; c < C; ++c) {
                std::size_t ix = (static_cast<std::size_t>(n) * C + c) * hw + p;
                out.at(ix) = x.at(ix) * ir;
            }
        }
    if (rec) {
        auto xi = x.impl();
        auto oi = out.impl();
        active_tape()->record([xi, oi, inv_r, N, C, hw] {
            if (oi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (std::size_t p = 0; p < hw; ++p) {
                    float ir = (*inv_r)[static_cast<std::size_t>(n) * hw + p];
                    double dot = 0.0;
                    for (int c = 0; c < C; ++c) {
                        std::size_t ix = (static_cast<std::size_t>(n) * C + c) * hw + p;
                        dot += static_cast<double>(oi->grad[ix]) * xi->data[ix];
                    }
                    for (int c = 0; c < C; ++c) {
                        std::size_t ix = (static_cast<std::size_t>(n) * C + c) * hw + p;
                        xi->grad[ix] += ir * oi->grad[ix] -
                                        static_cast<float>(dot) * ir * ir * ir * xi->data[ix];
                    }
                }
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    bool rec = tracked({&x});
    double s = 0.0;
    for (float v : x.data()) s += v;
    Tensor out = Tensor::scalar(static_cast<float>(s));
    out.set_requires_grad(rec);
    if (rec) {
        auto xi = x.impl();
        auto oi = out.impl();
        active_tape()->record([xi, oi] {
            if (oi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            float g = oi->grad[0];
            for (float& gv : xi->grad) gv += g;
        });
    }
    return out;
}

Tensor mean_all(const Tensor& x) {
    return scale(sum_all(x), 1.0f / static_cast<float>(x.size()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    bool rec = tracked({&a, &b});
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a.at(i)) - b.at(i);
        s += d * d;
    }
    Tensor out = Tensor::scalar(static_cast<float>(s / static_cast<double>(a.size())));
    out.set_requires_grad(rec);
    if (rec) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        std::size_t n = a.size();
        active_tape()->record([ai, bi, oi, n] {
            if (oi->grad.empty()) return;
            float g = oi->grad[0] * 2.0f / static_cast<float>(n);
            if (ai->requires_grad) ai->ensure_grad();
            if (bi->requires_grad) bi->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                float d = ai->data[i] - bi->data[i];
                if (ai->requires_grad) ai->grad[i] += g * d;
                if (bi->requires_grad) bi->grad[i] -= g * d;
            }
        });
    }
    return out;
}

Tensor round_ste(const Tensor& x) {
    bool rec = tracked({&x});
    Tensor out = make_out(x.shape(), rec);
    for (std::size_t i = 0; i < x.size(); ++i) out.at(i) = std::round(x.at(i));
    if (rec) {
        auto xi = x.impl();
        auto oi = out.impl();
        active_tape()->record([xi, oi] {
            if (oi->grad.empty() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
        });
    }
    return out;
}

Tensor gaussian_bits(const Tensor& y, const Tensor& mean, const Tensor& log_scale) {
    if (y.rank() != 4) throw ShapeError("gaussian_bits expects NCHW latent");
    const int N = y.dim(0), C = y.dim(1);
    if (mean.rank() != 1 || mean.dim(0) != C || log_scale.rank() != 1 || log_scale.dim(0) != C)
        throw ShapeError("gaussian_bits: mean/log_scale must be [C]");
    for (float ls : log_scale.data())
        if (!std::isfinite(ls)) throw NumericError("gaussian_bits: non-finite log scale");
    const std::size_t hw = static_cast<std::size_t>(y.dim(2)) * y.dim(3);
    constexpr double kMinP = 1e-9;
    constexpr double kInvLn2 = 1.4426950408889634;
    bool rec = tracked({&y, &mean, &log_scale});
    Tensor out = make_out(y.shape(), rec);
    // cache forward intermediates for backward
    auto cache = std::make_shared<std::vector<double>>();
    if (rec) cache->resize(y.size() * 3);  // (P, phi_hi - phi_lo, zphi_hi - zphi_lo) scaled by 1/sigma where needed
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            double mu = mean.at(static_cast<std::size_t>(c));
            double sigma = std::exp(static_cast<double>(log_scale.at(static_cast<std::size_t>(c))));
            std::size_t base = (static_cast<std::size_t>(n) * C + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                double v = y.at(base + i);
                double zhi = (v - mu + 0.5) / sigma;
                double zlo = (v - mu - 0.5) / sigma;
                double p = norm_cdf(zhi) - norm_cdf(zlo);
                if (p < kMinP) p = kMinP;
                out.at(base + i) = static_cast<float>(-std::log(p) * kInvLn2);
                if (rec) {
                    (*cache)[(base + i) * 3 + 0] = p;
                    (*cache)[(base + i) * 3 + 1] = (norm_pdf(zhi) - norm_pdf(zlo)) / sigma;
                    (*cache)[(base + i) * 3 + 2] = zhi * norm_pdf(zhi) - zlo * norm_pdf(zlo);
                }
            }
        }
    if (rec) {
        auto yi = y.impl(), mi = mean.impl(), si = log_scale.impl(), oi = out.impl();
        active_tape()->record([yi, mi, si, oi, cache, N, C, hw] {
            if (oi->grad.empty()) return;
            if (yi->requires_grad) yi->ensure_grad();
            if (mi->requires_grad) mi->ensure_grad();
            if (si->requires_grad) si->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    std::size_t base = (static_cast<std::size_t>(n) * C + c) * hw;
                    double dmu = 0.0, dls = 0.0;
                    for (std::size_t i = 0; i < hw; ++i) {
                        double g = oi->grad[base + i];
                        if (g == 0.0) continue;
                        double p = (*cache)[(base + i) * 3 + 0];
                        double dphi = (*cache)[(base + i) * 3 + 1];
                        double zphi = (*cache)[(base + i) * 3 + 2];
                        double common = g * kInvLn2 / p;
                        if (yi->requires_grad)
                            yi->grad[base + i] += static_cast<float>(-common * dphi);
                        dmu += common * dphi;
                        dls += common * zphi;
                    }
                    if (mi->requires_grad) mi->grad[static_cast<std::size_t>(c)] += static_cast<float>(dmu);
                    if (si->requires_grad) si->grad[static_cast<std::size_t>(c)] += static_cast<float>(dls);
                }
        });
    }
    return out;
}

}  // namespace alf::ops
