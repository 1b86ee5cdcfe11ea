#pragma once

#include <cmath>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include "dccl/array.hpp"
#include "dccl/errors.hpp"
#include "dccl/rng.hpp"

namespace dccl {

// ---------------------------------------------------------------------------
// Plain CHW activation buffer and a named parameter tensor.
// ---------------------------------------------------------------------------

template <typename T>
struct Chw {
    int c = 0, h = 0, w = 0;
    std::vector<T> v;

    Chw() = default;
    Chw(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, T(0)) {}

    T* plane(int ci) { return v.data() + static_cast<std::size_t>(ci) * h * w; }
    const T* plane(int ci) const { return v.data() + static_cast<std::size_t>(ci) * h * w; }
    std::size_t numel() const { return v.size(); }
};

template <typename T>
struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<T> v;

    std::size_t numel() const { return v.size(); }
    void zero() { std::fill(v.begin(), v.end(), T(0)); }
};

template <typename T>
NamedTensor<T> make_tensor(std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return NamedTensor<T>{std::move(name), std::move(shape), std::vector<T>(n, T(0))};
}

// ---------------------------------------------------------------------------
// Architecture: a two-level encoder-decoder with skip concatenation.
//
//   conv1 (in -> c1) @ H        ->  avgpool 2x2
//   conv2 (c1 -> c2) @ H/2      ->  avgpool 2x2
//   conv3 (c2 -> c2) @ H/4          bottleneck
//   nn-upsample x2, concat enc2 ->  conv4 (2*c2 -> c2) @ H/2
//   nn-upsample x2, concat enc1 ->  conv5 (c2+c1 -> c1) @ H
//   head 1x1 (c1 -> D), per-pixel L2 normalization (eps inside the division)
//
// Every 3x3 conv carries weight, bias, and a per-channel scale applied before
// the ReLU. Spatial sizes must be divisible by 4.
// ---------------------------------------------------------------------------

struct NetConfig {
    int in_channels = 1;
    int base_channels = 16;
    int embed_dim = 16;

    bool operator==(const NetConfig&) const = default;
};

constexpr double kNormEps = 1e-8;

template <typename T>
struct ModelParams {
    NetConfig cfg;
    std::vector<NamedTensor<T>> tensors;

    NamedTensor<T>& find(const std::string& name) {
        for (auto& t : tensors)
            if (t.name == name) return t;
        throw ShapeMismatch("no parameter tensor named " + name);
    }
    const NamedTensor<T>& find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t;
        throw ShapeMismatch("no parameter tensor named " + name);
    }
};

struct ConvLayerDef {
    std::string name;
    int in_ch;
    int out_ch;
};

inline std::vector<ConvLayerDef> conv_layer_defs(const NetConfig& cfg) {
    const int c1 = cfg.base_channels;
    const int c2 = 2 * cfg.base_channels;
    return {
        {"conv1", cfg.in_channels, c1},
        {"conv2", c1, c2},
        {"conv3", c2, c2},
        {"conv4", 2 * c2, c2},
        {"conv5", c2 + c1, c1},
    };
}

// Fixed parameter order; checkpoints serialize tensors in exactly this order.
template <typename T>
ModelParams<T> make_params(const NetConfig& cfg) {
    ModelParams<T> p;
    p.cfg = cfg;
    for (const auto& def : conv_layer_defs(cfg)) {
        p.tensors.push_back(make_tensor<T>(def.name + ".weight", {def.out_ch, def.in_ch, 3, 3}));
        p.tensors.push_back(make_tensor<T>(def.name + ".bias", {def.out_ch}));
        p.tensors.push_back(make_tensor<T>(def.name + ".scale", {def.out_ch}));
    }
    p.tensors.push_back(make_tensor<T>("head.weight", {cfg.embed_dim, cfg.base_channels, 1, 1}));
    p.tensors.push_back(make_tensor<T>("head.bias", {cfg.embed_dim}));
    return p;
}

// Kaiming-style fan-in init from a seeded stream; scales start at 1.
template <typename T>
ModelParams<T> init_params(const NetConfig& cfg, std::uint64_t seed) {
    ModelParams<T> p = make_params<T>(cfg);
    Rng rng(seed);
    for (auto& t : p.tensors) {
        if (t.name.ends_with(".scale")) {
            std::fill(t.v.begin(), t.v.end(), T(1));
        } else if (t.name.ends_with(".bias")) {
            t.zero();
        } else {
            const bool head = t.name.starts_with("head.");
            std::size_t fan_in = 1;
            for (std::size_t i = 1; i < t.shape.size(); ++i) fan_in *= static_cast<std::size_t>(t.shape[i]);
            const double std_dev = std::sqrt((head ? 1.0 : 2.0) / static_cast<double>(fan_in));
            for (auto& x : t.v) x = static_cast<T>(rng.normal() * std_dev);
        }
    }
    return p;
}

template <typename Src, typename Dst>
ModelParams<Dst> cast_params(const ModelParams<Src>& src) {
    ModelParams<Dst> out;
    out.cfg = src.cfg;
    for (const auto& t : src.tensors) {
        NamedTensor<Dst> nt{t.name, t.shape, std::vector<Dst>(t.v.size())};
        for (std::size_t i = 0; i < t.v.size(); ++i) nt.v[i] = static_cast<Dst>(t.v[i]);
        out.tensors.push_back(std::move(nt));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Layer primitives (zero-padded 3x3 conv, 2x2 average pool, x2 nearest
// upsample, channel concat, per-pixel L2 normalization).
// ---------------------------------------------------------------------------

namespace nn {

template <typename T>
Chw<T> zero_pad1(const Chw<T>& x) {
    Chw<T> p(x.c, x.h + 2, x.w + 2);
    for (int c = 0; c < x.c; ++c) {
        const T* src = x.plane(c);
        T* dst = p.plane(c);
        for (int y = 0; y < x.h; ++y) {
            std::memcpy(dst + static_cast<std::size_t>(y + 1) * p.w + 1,
                        src + static_cast<std::size_t>(y) * x.w, sizeof(T) * x.w);
        }
    }
    return p;
}

// out[co] = sum_ci conv3x3(x[ci], W[co][ci]) + b[co]
template <typename T>
void conv3x3_forward(const Chw<T>& x, const NamedTensor<T>& weight, const NamedTensor<T>& bias,
                     Chw<T>& out) {
    const int co_n = weight.shape[0], ci_n = weight.shape[1];
    const Chw<T> pad = zero_pad1(x);
    out = Chw<T>(co_n, x.h, x.w);
    for (int co = 0; co < co_n; ++co) {
        T* op = out.plane(co);
        std::fill(op, op + static_cast<std::size_t>(x.h) * x.w, bias.v[co]);
        for (int ci = 0; ci < ci_n; ++ci) {
            const T* pp = pad.plane(ci);
            const T* wk = weight.v.data() + (static_cast<std::size_t>(co) * ci_n + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const T wv = wk[ky * 3 + kx];
                    for (int y = 0; y < x.h; ++y) {
                        const T* src = pp + static_cast<std::size_t>(y + ky) * pad.w + kx;
                        T* dst = op + static_cast<std::size_t>(y) * x.w;
                        for (int xx = 0; xx < x.w; ++xx) dst[xx] += wv * src[xx];
                    }
                }
            }
        }
    }
}

// dx, dW, db given upstream dt on the conv output.
template <typename T>
void conv3x3_backward(const Chw<T>& x, const NamedTensor<T>& weight, const Chw<T>& dt, Chw<T>& dx,
                      NamedTensor<T>& dweight, NamedTensor<T>& dbias) {
    const int co_n = weight.shape[0], ci_n = weight.shape[1];
    const Chw<T> pad = zero_pad1(x);

    for (int co = 0; co < co_n; ++co) {
        const T* up = dt.plane(co);
        T acc = T(0);
        for (std::size_t i = 0; i < static_cast<std::size_t>(x.h) * x.w; ++i) acc += up[i];
        dbias.v[co] += acc;
        for (int ci = 0; ci < ci_n; ++ci) {
            const T* pp = pad.plane(ci);
            T* wg = dweight.v.data() + (static_cast<std::size_t>(co) * ci_n + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    T s = T(0);
                    for (int y = 0; y < x.h; ++y) {
                        const T* src = pp + static_cast<std::size_t>(y + ky) * pad.w + kx;
                        const T* u = up + static_cast<std::size_t>(y) * x.w;
                        for (int xx = 0; xx < x.w; ++xx) s += u[xx] * src[xx];
                    }
                    wg[ky * 3 + kx] += s;
                }
            }
        }
    }

    Chw<T> dpad(ci_n, x.h + 2, x.w + 2);
    for (int ci = 0; ci < ci_n; ++ci) {
        T* dp = dpad.plane(ci);
        for (int co = 0; co < co_n; ++co) {
            const T* up = dt.plane(co);
            const T* wk = weight.v.data() + (static_cast<std::size_t>(co) * ci_n + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const T wv = wk[ky * 3 + kx];
                    for (int y = 0; y < x.h; ++y) {
                        T* dst = dp + static_cast<std::size_t>(y + ky) * dpad.w + kx;
                        const T* u = up + static_cast<std::size_t>(y) * x.w;
                        for (int xx = 0; xx < x.w; ++xx) dst[xx] += wv * u[xx];
                    }
                }
            }
        }
    }
    dx = Chw<T>(ci_n, x.h, x.w);
    for (int ci = 0; ci < ci_n; ++ci) {
        const T* dp = dpad.plane(ci);
        T* dst = dx.plane(ci);
        for (int y = 0; y < x.h; ++y) {
            std::memcpy(dst + static_cast<std::size_t>(y) * x.w,
                        dp + static_cast<std::size_t>(y + 1) * dpad.w + 1, sizeof(T) * x.w);
        }
    }
}

template <typename T>
void scale_relu_forward(const Chw<T>& t, const NamedTensor<T>& scale, Chw<T>& y) {
    y = Chw<T>(t.c, t.h, t.w);
    for (int c = 0; c < t.c; ++c) {
        const T g = scale.v[c];
        const T* src = t.plane(c);
        T* dst = y.plane(c);
        for (std::size_t i = 0; i < static_cast<std::size_t>(t.h) * t.w; ++i) {
            const T u = g * src[i];
            dst[i] = u > T(0) ? u : T(0);
        }
    }
}

template <typename T>
void scale_relu_backward(const Chw<T>& t, const NamedTensor<T>& scale, const Chw<T>& y,
                         const Chw<T>& dy, Chw<T>& dt, NamedTensor<T>& dscale) {
    dt = Chw<T>(t.c, t.h, t.w);
    for (int c = 0; c < t.c; ++c) {
        const T g = scale.v[c];
        const T* tp = t.plane(c);
        const T* yp = y.plane(c);
        const T* up = dy.plane(c);
        T* dp = dt.plane(c);
        T gacc = T(0);
        for (std::size_t i = 0; i < static_cast<std::size_t>(t.h) * t.w; ++i) {
            const T du = yp[i] > T(0) ? up[i] : T(0);
            gacc += du * tp[i];
            dp[i] = du * g;
        }
        dscale.v[c] += gacc;
    }
}

template <typename T>
Chw<T> avgpool2_forward(const Chw<T>& x) {
    Chw<T> y(x.c, x.h / 2, x.w / 2);
    for (int c = 0; c < x.c; ++c) {
        const T* src = x.plane(c);
        T* dst = y.plane(c);
        for (int yy = 0; yy < y.h; ++yy) {
            for (int xx = 0; xx < y.w; ++xx) {
                const T* r0 = src + static_cast<std::size_t>(2 * yy) * x.w + 2 * xx;
                const T* r1 = r0 + x.w;
                dst[static_cast<std::size_t>(yy) * y.w + xx] =
                    (r0[0] + r0[1] + r1[0] + r1[1]) * T(0.25);
            }
        }
    }
    return y;
}

template <typename T>
Chw<T> avgpool2_backward(const Chw<T>& dy, int h, int w) {
    Chw<T> dx(dy.c, h, w);
    for (int c = 0; c < dy.c; ++c) {
        const T* up = dy.plane(c);
        T* dst = dx.plane(c);
        for (int yy = 0; yy < dy.h; ++yy) {
            for (int xx = 0; xx < dy.w; ++xx) {
                const T g = up[static_cast<std::size_t>(yy) * dy.w + xx] * T(0.25);
                T* r0 = dst + static_cast<std::size_t>(2 * yy) * w + 2 * xx;
                T* r1 = r0 + w;
                r0[0] = g;
                r0[1] = g;
                r1[0] = g;
                r1[1] = g;
            }
        }
    }
    return dx;
}

template <typename T>
Chw<T> upsample_nn2_forward(const Chw<T>& x) {
    Chw<T> y(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c) {
        const T* src = x.plane(c);
        T* dst = y.plane(c);
        for (int yy = 0; yy < y.h; ++yy) {
            const T* sr = src + static_cast<std::size_t>(yy / 2) * x.w;
            T* dr = dst + static_cast<std::size_t>(yy) * y.w;
            for (int xx = 0; xx < y.w; ++xx) dr[xx] = sr[xx / 2];
        }
    }
    return y;
}

template <typename T>
Chw<T> upsample_nn2_backward(const Chw<T>& dy) {
    Chw<T> dx(dy.c, dy.h / 2, dy.w / 2);
    for (int c = 0; c < dy.c; ++c) {
        const T* up = dy.plane(c);
        T* dst = dx.plane(c);
        for (int yy = 0; yy < dy.h; ++yy) {
            const T* ur = up + static_cast<std::size_t>(yy) * dy.w;
            T* dr = dst + static_cast<std::size_t>(yy / 2) * dx.w;
            for (int xx = 0; xx < dy.w; ++xx) dr[xx / 2] += ur[xx];
        }
    }
    return dx;
}

template <typename T>
Chw<T> concat(const Chw<T>& a, const Chw<T>& b) {
    Chw<T> y(a.c + b.c, a.h, a.w);
    std::memcpy(y.v.data(), a.v.data(), sizeof(T) * a.v.size());
    std::memcpy(y.v.data() + a.v.size(), b.v.data(), sizeof(T) * b.v.size());
    return y;
}

template <typename T>
void split(const Chw<T>& dy, int ca, Chw<T>& da, Chw<T>& db) {
    da = Chw<T>(ca, dy.h, dy.w);
    db = Chw<T>(dy.c - ca, dy.h, dy.w);
    std::memcpy(da.v.data(), dy.v.data(), sizeof(T) * da.v.size());
    std::memcpy(db.v.data(), dy.v.data() + da.v.size(), sizeof(T) * db.v.size());
}

template <typename T>
void head1x1_forward(const Chw<T>& x, const NamedTensor<T>& weight, const NamedTensor<T>& bias,
                     Chw<T>& out) {
    const int d_n = weight.shape[0], c_n = weight.shape[1];
    out = Chw<T>(d_n, x.h, x.w);
    const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
    for (int d = 0; d < d_n; ++d) {
        T* op = out.plane(d);
        std::fill(op, op + hw, bias.v[d]);
        for (int c = 0; c < c_n; ++c) {
            const T wv = weight.v[static_cast<std::size_t>(d) * c_n + c];
            const T* src = x.plane(c);
            for (std::size_t i = 0; i < hw; ++i) op[i] += wv * src[i];
        }
    }
}

template <typename T>
void head1x1_backward(const Chw<T>& x, const NamedTensor<T>& weight, const Chw<T>& dout, Chw<T>& dx,
                      NamedTensor<T>& dweight, NamedTensor<T>& dbias) {
    const int d_n = weight.shape[0], c_n = weight.shape[1];
    const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
    dx = Chw<T>(c_n, x.h, x.w);
    for (int d = 0; d < d_n; ++d) {
        const T* up = dout.plane(d);
        T bacc = T(0);
        for (std::size_t i = 0; i < hw; ++i) bacc += up[i];
        dbias.v[d] += bacc;
        for (int c = 0; c < c_n; ++c) {
            const T* src = x.plane(c);
            T* dst = dx.plane(c);
            const T wv = weight.v[static_cast<std::size_t>(d) * c_n + c];
            T wacc = T(0);
            for (std::size_t i = 0; i < hw; ++i) {
                wacc += up[i] * src[i];
                dst[i] += wv * up[i];
            }
            dweight.v[static_cast<std::size_t>(d) * c_n + c] += wacc;
        }
    }
}

// z = t / (|t| + eps), per pixel across channels.
template <typename T>
void l2norm_forward(const Chw<T>& t, EmbeddingField<T>& z, std::vector<T>& norms) {
    const std::size_t hw = static_cast<std::size_t>(t.h) * t.w;
    z = EmbeddingField<T>(t.h, t.w, t.c);
    norms.assign(hw, T(0));
    for (std::size_t p = 0; p < hw; ++p) {
        T s = T(0);
        for (int c = 0; c < t.c; ++c) {
            const T x = t.v[static_cast<std::size_t>(c) * hw + p];
            s += x * x;
        }
        const T n = std::sqrt(s);
        norms[p] = n;
        const T inv = T(1) / (n + static_cast<T>(kNormEps));
        for (int c = 0; c < t.c; ++c) {
            z.v[p * t.c + c] = t.v[static_cast<std::size_t>(c) * hw + p] * inv;
        }
    }
}

// dt_j = dz_j / (n+eps) - t_j * <t, dz> / (n (n+eps)^2)
template <typename T>
void l2norm_backward(const Chw<T>& t, const std::vector<T>& norms, const EmbeddingField<T>& dz,
                     Chw<T>& dt) {
    const std::size_t hw = static_cast<std::size_t>(t.h) * t.w;
    dt = Chw<T>(t.c, t.h, t.w);
    for (std::size_t p = 0; p < hw; ++p) {
        const T n = norms[p];
        const T ne = n + static_cast<T>(kNormEps);
        T dot = T(0);
        for (int c = 0; c < t.c; ++c) {
            dot += t.v[static_cast<std::size_t>(c) * hw + p] * dz.v[p * t.c + c];
        }
        if (n > static_cast<T>(1e-30)) {
            const T k = dot / (n * ne * ne);
            for (int c = 0; c < t.c; ++c) {
                const std::size_t ti = static_cast<std::size_t>(c) * hw + p;
                dt.v[ti] = dz.v[p * t.c + c] / ne - t.v[ti] * k;
            }
        } else {
            for (int c = 0; c < t.c; ++c) {
                dt.v[static_cast<std::size_t>(c) * hw + p] = dz.v[p * t.c + c] / ne;
            }
        }
    }
}

}  // namespace nn

// ---------------------------------------------------------------------------
// Whole-network forward/backward with cached activations.
// ---------------------------------------------------------------------------

template <typename T>
struct ForwardTrace {
    Chw<T> input;
    // Per conv layer: input x, pre-scale t, post-relu y.
    std::vector<Chw<T>> conv_x, conv_t, conv_y;
    Chw<T> pool1, pool2;
    Chw<T> up1, cat1, up2, cat2;
    Chw<T> head_in;   // alias of conv5 output
    Chw<T> head_out;  // pre-normalization embedding
    std::vector<T> norms;
    EmbeddingField<T> field;
};

template <typename T>
Chw<T> image_to_chw(const Image& img) {
    Chw<T> x(1, img.h, img.w);
    for (std::size_t i = 0; i < img.v.size(); ++i) x.v[i] = static_cast<T>(img.v[i]);
    return x;
}

template <typename T>
void check_input(const NetConfig& cfg, const Chw<T>& x) {
    if (x.c != cfg.in_channels || x.h % 4 != 0 || x.w % 4 != 0 || x.h < 8 || x.w < 8) {
        throw ShapeMismatch("input must be (in_channels, H, W) with H, W multiples of 4 and >= 8; got (" +
                            std::to_string(x.c) + ", " + std::to_string(x.h) + ", " +
                            std::to_string(x.w) + ")");
    }
}

template <typename T>
EmbeddingField<T> forward_trace(const ModelParams<T>& params, const Chw<T>& input,
                                ForwardTrace<T>& trace) {
    check_input(params.cfg, input);
    const auto defs = conv_layer_defs(params.cfg);
    trace.conv_x.assign(5, {});
    trace.conv_t.assign(5, {});
    trace.conv_y.assign(5, {});
    trace.input = input;

    auto conv_block = [&](int li, const Chw<T>& x) -> const Chw<T>& {
        const auto& w = params.find(defs[li].name + ".weight");
        const auto& b = params.find(defs[li].name + ".bias");
        const auto& g = params.find(defs[li].name + ".scale");
        trace.conv_x[li] = x;
        nn::conv3x3_forward(x, w, b, trace.conv_t[li]);
        nn::scale_relu_forward(trace.conv_t[li], g, trace.conv_y[li]);
        return trace.conv_y[li];
    };

    const Chw<T>& enc1 = conv_block(0, input);
    trace.pool1 = nn::avgpool2_forward(enc1);
    const Chw<T>& enc2 = conv_block(1, trace.pool1);
    trace.pool2 = nn::avgpool2_forward(enc2);
    const Chw<T>& bott = conv_block(2, trace.pool2);

    trace.up1 = nn::upsample_nn2_forward(bott);
    trace.cat1 = nn::concat(trace.up1, enc2);
    const Chw<T>& dec1 = conv_block(3, trace.cat1);

    trace.up2 = nn::upsample_nn2_forward(dec1);
    trace.cat2 = nn::concat(trace.up2, enc1);
    const Chw<T>& dec2 = conv_block(4, trace.cat2);

    trace.head_in = dec2;
    nn::head1x1_forward(dec2, params.find("head.weight"), params.find("head.bias"), trace.head_out);
    nn::l2norm_forward(trace.head_out, trace.field, trace.norms);
    return trace.field;
}

template <typename T>
EmbeddingField<T> forward(const ModelParams<T>& params, const Image& img) {
    ForwardTrace<T> trace;
    return forward_trace(params, image_to_chw<T>(img), trace);
}

// Gradients come back as a parameter-shaped list in the same order.
template <typename T>
ModelParams<T> zero_grads(const ModelParams<T>& params) {
    ModelParams<T> g;
    g.cfg = params.cfg;
    for (const auto& t : params.tensors) {
        g.tensors.push_back(make_tensor<T>(t.name, t.shape));
    }
    return g;
}

template <typename T>
void backward(const ModelParams<T>& params, const ForwardTrace<T>& trace,
              const EmbeddingField<T>& dfield, ModelParams<T>& grads) {
    const auto defs = conv_layer_defs(params.cfg);

    Chw<T> d_head_out;
    nn::l2norm_backward(trace.head_out, trace.norms, dfield, d_head_out);

    Chw<T> d_dec2;
    nn::head1x1_backward(trace.head_in, params.find("head.weight"), d_head_out, d_dec2,
                         grads.find("head.weight"), grads.find("head.bias"));

    auto conv_block_backward = [&](int li, const Chw<T>& dy) -> Chw<T> {
        const auto& w = params.find(defs[li].name + ".weight");
        const auto& g = params.find(defs[li].name + ".scale");
        Chw<T> dt, dx;
        nn::scale_relu_backward(trace.conv_t[li], g, trace.conv_y[li], dy, dt,
                                grads.find(defs[li].name + ".scale"));
        nn::conv3x3_backward(trace.conv_x[li], w, dt, dx, grads.find(defs[li].name + ".weight"),
                             grads.find(defs[li].name + ".bias"));
        return dx;
    };

    Chw<T> d_cat2 = conv_block_backward(4, d_dec2);
    Chw<T> d_up2, d_enc1_skip;
    nn::split(d_cat2, trace.up2.c, d_up2, d_enc1_skip);
    Chw<T> d_dec1 = nn::upsample_nn2_backward(d_up2);

    Chw<T> d_cat1 = conv_block_backward(3, d_dec1);
    Chw<T> d_up1, d_enc2_skip;
    nn::split(d_cat1, trace.up1.c, d_up1, d_enc2_skip);
    Chw<T> d_bott = nn::upsample_nn2_backward(d_up1);

    Chw<T> d_pool2 = conv_block_backward(2, d_bott);
    Chw<T> d_enc2 = nn::avgpool2_backward(d_pool2, trace.conv_y[1].h, trace.conv_y[1].w);
    for (std::size_t i = 0; i < d_enc2.v.size(); ++i) d_enc2.v[i] += d_enc2_skip.v[i];

    Chw<T> d_pool1 = conv_block_backward(1, d_enc2);
    Chw<T> d_enc1 = nn::avgpool2_backward(d_pool1, trace.conv_y[0].h, trace.conv_y[0].w);
    for (std::size_t i = 0; i < d_enc1.v.size(); ++i) d_enc1.v[i] += d_enc1_skip.v[i];

    conv_block_backward(0, d_enc1);
}

// ---------------------------------------------------------------------------
// Momentum SGD. Velocities live beside the parameters; a non-finite gradient
// aborts the step and names the offending tensor.
// ---------------------------------------------------------------------------

template <typename T>
struct SgdState {
    std::vector<NamedTensor<T>> velocity;

    static SgdState make(const ModelParams<T>& params) {
        SgdState s;
        for (const auto& t : params.tensors) s.velocity.push_back(make_tensor<T>(t.name, t.shape));
        return s;
    }
};

template <typename T>
void sgd_step(ModelParams<T>& params, const ModelParams<T>& grads, SgdState<T>& state, double lr,
              double momentum) {
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        const auto& g = grads.tensors[i];
        for (const T x : g.v) {
            if (!std::isfinite(static_cast<double>(x))) {
                throw NonFiniteGradient("non-finite gradient in tensor " + g.name);
            }
        }
    }
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        auto& p = params.tensors[i];
        const auto& g = grads.tensors[i];
        auto& v = state.velocity[i].v;
        for (std::size_t j = 0; j < p.v.size(); ++j) {
            v[j] = static_cast<T>(momentum) * v[j] + g.v[j];
            p.v[j] -= static_cast<T>(lr) * v[j];
        }
    }
}

template <typename T>
void accumulate(ModelParams<T>& into, const ModelParams<T>& grads, T scale = T(1)) {
    for (std::size_t i = 0; i < into.tensors.size(); ++i) {
        const auto& src = grads.tensors[i].v;
        auto& dst = into.tensors[i].v;
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
    }
}

}  // namespace dccl
