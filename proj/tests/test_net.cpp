#include <filesystem>

#include <gtest/gtest.h>

#include "dccl/checkpoint.hpp"
#include "dccl/net.hpp"

using namespace dccl;

namespace {

NetConfig tiny_cfg() {
    NetConfig c;
    c.base_channels = 4;
    c.embed_dim = 4;
    return c;
}

template <typename T>
Chw<T> random_input(int h, int w, std::uint64_t seed) {
    Chw<T> x(1, h, w);
    Rng rng(seed);
    for (auto& v : x.v) v = static_cast<T>(rng.uniform01());
    return x;
}

// Scalar objective J(params) = <U, field(params)> used for finite-difference
// probing of the whole forward pass.
double objective(const ModelParams<double>& params, const Chw<double>& input,
                 const EmbeddingField<double>& u) {
    ForwardTrace<double> trace;
    forward_trace(params, input, trace);
    double j = 0.0;
    for (std::size_t i = 0; i < trace.field.v.size(); ++i) j += trace.field.v[i] * u.v[i];
    return j;
}

}  // namespace

TEST(Net, PixelNormsAreUnit) {
    const NetConfig cfg = tiny_cfg();
    const ModelParams<float> params = init_params<float>(cfg, 1);
    const Chw<float> x = random_input<float>(16, 16, 2);
    ForwardTrace<float> trace;
    const EmbeddingField<float>& field = forward_trace(params, x, trace);
    for (int y = 0; y < field.h; ++y) {
        for (int xx = 0; xx < field.w; ++xx) {
            const float* z = field.pixel(y, xx);
            double n = 0.0;
            for (int d = 0; d < field.d; ++d) n += static_cast<double>(z[d]) * z[d];
            EXPECT_NEAR(std::sqrt(n), 1.0, 1e-5);
        }
    }
}

TEST(Net, ZeroHeadStaysFinite) {
    const NetConfig cfg = tiny_cfg();
    ModelParams<float> params = init_params<float>(cfg, 3);
    params.find("head.weight").zero();
    params.find("head.bias").zero();
    const Chw<float> x = random_input<float>(8, 8, 4);
    ForwardTrace<float> trace;
    const EmbeddingField<float>& field = forward_trace(params, x, trace);
    for (float v : field.v) EXPECT_TRUE(std::isfinite(v));
}

TEST(Net, ForwardIsDeterministic) {
    const NetConfig cfg = tiny_cfg();
    const ModelParams<float> params = init_params<float>(cfg, 5);
    const Chw<float> x = random_input<float>(12, 12, 6);
    ForwardTrace<float> t1, t2;
    forward_trace(params, x, t1);
    forward_trace(params, x, t2);
    EXPECT_EQ(t1.field.v, t2.field.v);
}

TEST(Net, ShapeMismatchThrows) {
    const ModelParams<float> params = init_params<float>(tiny_cfg(), 7);
    Chw<float> bad(1, 10, 10);  // not divisible by 4
    ForwardTrace<float> trace;
    EXPECT_THROW(forward_trace(params, bad, trace), ShapeMismatch);
    Chw<float> bad2(2, 16, 16);
    EXPECT_THROW(forward_trace(params, bad2, trace), ShapeMismatch);
}

// Interior embeddings follow an input translation exactly (padding effects
// are confined to a boundary band narrower than the margin used here).
TEST(Net, TranslationEquivariantInterior) {
    const NetConfig cfg = tiny_cfg();
    const ModelParams<float> params = init_params<float>(cfg, 8);
    const int h = 64, w = 96, dx = 4, margin = 28;

    const Chw<float> x = random_input<float>(h, w, 9);
    Chw<float> xs(1, h, w);
    for (int y = 0; y < h; ++y)
        for (int xx = dx; xx < w; ++xx) xs.v[static_cast<std::size_t>(y) * w + xx] =
            x.v[static_cast<std::size_t>(y) * w + xx - dx];

    ForwardTrace<float> t1, t2;
    forward_trace(params, x, t1);
    forward_trace(params, xs, t2);

    for (int y = margin; y < h - margin; ++y) {
        for (int xx = margin; xx < w - margin - dx; ++xx) {
            const float* a = t1.field.pixel(y, xx);
            const float* b = t2.field.pixel(y, xx + dx);
            for (int d = 0; d < cfg.embed_dim; ++d) {
                ASSERT_NEAR(a[d], b[d], 1e-4) << "pixel (" << xx << ", " << y << ") dim " << d;
            }
        }
    }
}

TEST(Net, ZeroUpstreamGivesZeroGradients) {
    const NetConfig cfg = tiny_cfg();
    const ModelParams<double> params = init_params<double>(cfg, 10);
    const Chw<double> x = random_input<double>(8, 8, 11);
    ForwardTrace<double> trace;
    forward_trace(params, x, trace);
    EmbeddingField<double> dfield(8, 8, cfg.embed_dim);
    ModelParams<double> grads = zero_grads(params);
    backward(params, trace, dfield, grads);
    for (const auto& t : grads.tensors) {
        for (double v : t.v) EXPECT_EQ(v, 0.0);
    }
}

// Central finite differences at h = 1e-5 in 64-bit mode, 32 random probes per
// parameter tensor. Biases get a small random offset first: at the exact
// all-zero-bias init a dead pixel feeds the normalization its non-smooth
// point, where no finite difference can match.
TEST(Net, GradientsMatchFiniteDifferences) {
    const NetConfig cfg = tiny_cfg();
    ModelParams<double> params = init_params<double>(cfg, 12);
    Rng jitter(99);
    for (auto& t : params.tensors) {
        if (t.name.ends_with(".bias")) {
            for (auto& v : t.v) v += jitter.uniform(0.01, 0.05);
        }
    }
    const Chw<double> x = random_input<double>(8, 8, 13);

    EmbeddingField<double> u(8, 8, cfg.embed_dim);
    Rng urng(14);
    for (auto& v : u.v) v = urng.uniform(-1.0, 1.0);

    ForwardTrace<double> trace;
    forward_trace(params, x, trace);
    double min_norm = 1e30;
    for (double n : trace.norms) min_norm = std::min(min_norm, n);
    ASSERT_GT(min_norm, 1e-2) << "degenerate pixel norm; FD probing needs a generic point";

    ModelParams<double> grads = zero_grads(params);
    backward(params, trace, u, grads);

    Rng probe_rng(15);
    const double h = 1e-5;
    for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
        auto& tensor = params.tensors[ti];
        for (int probe = 0; probe < 32; ++probe) {
            const std::size_t j = probe_rng.uniform_index(tensor.v.size());
            const double orig = tensor.v[j];
            tensor.v[j] = orig + h;
            const double jp = objective(params, x, u);
            tensor.v[j] = orig - h;
            const double jm = objective(params, x, u);
            tensor.v[j] = orig;
            const double fd = (jp - jm) / (2.0 * h);
            const double an = grads.tensors[ti].v[j];
            const double denom = std::max({1e-6, std::abs(fd), std::abs(an)});
            EXPECT_LT(std::abs(fd - an) / denom, 1e-4)
                << tensor.name << "[" << j << "]: fd=" << fd << " analytic=" << an;
        }
    }
}

// Closed-form Jacobian oracle for the normalization layer: (I - z z^T)/|x|
// (the epsilon term is negligible at unit-scale inputs).
TEST(Net, L2NormJacobianMatchesClosedForm) {
    const int d = 5;
    Rng rng(16);
    Chw<double> t(d, 1, 1);
    for (auto& v : t.v) v = rng.uniform(-2.0, 2.0);

    EmbeddingField<double> z;
    std::vector<double> norms;
    nn::l2norm_forward(t, z, norms);
    const double n = norms[0];

    for (int k = 0; k < d; ++k) {
        EmbeddingField<double> dz(1, 1, d);
        dz.v[k] = 1.0;
        Chw<double> dt;
        nn::l2norm_backward(t, norms, dz, dt);
        for (int j = 0; j < d; ++j) {
            const double expect = ((k == j ? 1.0 : 0.0) - z.v[k] * z.v[j]) / n;
            EXPECT_NEAR(dt.v[j], expect, 1e-6);
        }
    }
}

TEST(Sgd, ZeroLearningRateKeepsParams) {
    ModelParams<float> p = init_params<float>(tiny_cfg(), 17);
    const ModelParams<float> orig = p;
    ModelParams<float> g = zero_grads(p);
    for (auto& t : g.tensors)
        for (auto& v : t.v) v = 1.0f;
    SgdState<float> s = SgdState<float>::make(p);
    sgd_step(p, g, s, 0.0, 0.9);
    for (std::size_t i = 0; i < p.tensors.size(); ++i) EXPECT_EQ(p.tensors[i].v, orig.tensors[i].v);
}

TEST(Sgd, PlainStepMatchesFormula) {
    ModelParams<float> p = init_params<float>(tiny_cfg(), 18);
    const float before = p.tensors[0].v[0];
    ModelParams<float> g = zero_grads(p);
    g.tensors[0].v[0] = 2.0f;
    SgdState<float> s = SgdState<float>::make(p);
    sgd_step(p, g, s, 0.1, 0.0);
    EXPECT_FLOAT_EQ(p.tensors[0].v[0], before - 0.1f * 2.0f);
}

// Scalar recurrence oracle: v1 = g, p1 = p0 - lr g; v2 = 0.9 g + g,
// p2 = p1 - lr v2.
TEST(Sgd, MomentumMatchesHandComputedSequence) {
    ModelParams<float> p = init_params<float>(tiny_cfg(), 19);
    const double p0 = p.tensors[0].v[0];
    const double g = 0.5, lr = 0.2, mu = 0.9;
    ModelParams<float> grads = zero_grads(p);
    grads.tensors[0].v[0] = static_cast<float>(g);
    SgdState<float> s = SgdState<float>::make(p);

    sgd_step(p, grads, s, lr, mu);
    const double v1 = g;
    const double p1 = p0 - lr * v1;
    EXPECT_NEAR(p.tensors[0].v[0], p1, 1e-6);

    sgd_step(p, grads, s, lr, mu);
    const double v2 = mu * v1 + g;
    const double p2 = p1 - lr * v2;
    EXPECT_NEAR(p.tensors[0].v[0], p2, 1e-6);
}

TEST(Sgd, NonFiniteGradientNamesTensor) {
    ModelParams<float> p = init_params<float>(tiny_cfg(), 20);
    ModelParams<float> g = zero_grads(p);
    g.find("conv3.bias").v[0] = std::numeric_limits<float>::quiet_NaN();
    SgdState<float> s = SgdState<float>::make(p);
    try {
        sgd_step(p, g, s, 0.1, 0.9);
        FAIL() << "expected NonFiniteGradient";
    } catch (const NonFiniteGradient& e) {
        EXPECT_NE(std::string(e.what()).find("conv3.bias"), std::string::npos);
    }
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Checkpoint ckpt;
    ckpt.params = init_params<float>(tiny_cfg(), 21);
    ckpt.opt = SgdState<float>::make(ckpt.params);
    Rng rng(22);
    for (auto& t : ckpt.opt.velocity)
        for (auto& v : t.v) v = static_cast<float>(rng.normal());
    ckpt.seed = 777;
    ckpt.step = 123;
    ckpt.config_hash = "deadbeef";

    const auto path = std::filesystem::temp_directory_path() / "dccl_test_ckpt.bin";
    save_checkpoint(path, ckpt);
    const Checkpoint back = load_checkpoint(path);
    std::filesystem::remove(path);

    EXPECT_EQ(back.seed, ckpt.seed);
    EXPECT_EQ(back.step, ckpt.step);
    EXPECT_EQ(back.config_hash, ckpt.config_hash);
    EXPECT_EQ(back.params.cfg, ckpt.params.cfg);
    for (std::size_t i = 0; i < ckpt.params.tensors.size(); ++i) {
        EXPECT_EQ(back.params.tensors[i].name, ckpt.params.tensors[i].name);
        EXPECT_EQ(back.params.tensors[i].v, ckpt.params.tensors[i].v);
    }
    for (std::size_t i = 0; i < ckpt.opt.velocity.size(); ++i) {
        EXPECT_EQ(back.opt.velocity[i].v, ckpt.opt.velocity[i].v);
    }
}
