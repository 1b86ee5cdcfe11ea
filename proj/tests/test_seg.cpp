#include <gtest/gtest.h>

#include "dccl/finetune.hpp"
#include "dccl/seg_metrics.hpp"

using namespace dccl;

namespace {

LabelMask box_mask(int h, int w, int y0, int y1, int x0, int x1, int cls = 1) {
    LabelMask m(h, w, 0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.at(y, x) = static_cast<std::uint8_t>(cls);
    return m;
}

}  // namespace

TEST(Dice, IdenticalNonEmptyMasksScoreOne) {
    const LabelMask m = box_mask(16, 16, 4, 10, 4, 10);
    EXPECT_DOUBLE_EQ(dice(m, m, 1), 1.0);
}

TEST(Dice, DisjointEqualSizedMasksScoreZero) {
    const LabelMask a = box_mask(16, 16, 0, 4, 0, 4);
    const LabelMask b = box_mask(16, 16, 8, 12, 8, 12);
    EXPECT_DOUBLE_EQ(dice(a, b, 1), 0.0);
}

// Hand count: |P| = 6, |G| = 10, overlap 4 -> 2*4 / 16 = 0.5.
TEST(Dice, HandCountedOverlap) {
    LabelMask pred(8, 8, 0), gt(8, 8, 0);
    for (int i = 0; i < 6; ++i) pred.v[i] = 1;
    for (int i = 2; i < 12; ++i) gt.v[i] = 1;
    EXPECT_DOUBLE_EQ(dice(pred, gt, 1), 0.5);
}

TEST(Dice, BothEmptyScoresOneByConvention) {
    const LabelMask a(8, 8, 0), b(8, 8, 0);
    EXPECT_DOUBLE_EQ(dice(a, b, 1), 1.0);
}

TEST(Dice, SymmetricInArguments) {
    const LabelMask a = box_mask(16, 16, 2, 9, 3, 11);
    const LabelMask b = box_mask(16, 16, 4, 12, 5, 13);
    EXPECT_DOUBLE_EQ(dice(a, b, 1), dice(b, a, 1));
}

TEST(Surface, IdenticalMasksGiveZeroDistances) {
    const LabelMask m = box_mask(16, 16, 4, 10, 4, 10);
    const SurfaceDistances sd = surface_distances(m, m, 1);
    EXPECT_DOUBLE_EQ(sd.hd95, 0.0);
    EXPECT_DOUBLE_EQ(sd.asd, 0.0);
}

TEST(Surface, SingletonMasksFiveApart) {
    LabelMask a(16, 16, 0), b(16, 16, 0);
    a.at(5, 2) = 1;
    b.at(5, 7) = 1;
    const SurfaceDistances sd = surface_distances(a, b, 1);
    EXPECT_DOUBLE_EQ(sd.hd95, 5.0);
    EXPECT_DOUBLE_EQ(sd.asd, 5.0);
}

// Brute-force distance oracle for a 10x10 square against its (3, 0) shift.
TEST(Surface, ShiftedSquareMatchesBruteForceOracle) {
    const LabelMask a = box_mask(24, 24, 5, 15, 5, 15);
    const LabelMask b = box_mask(24, 24, 5, 15, 8, 18);

    // independent recomputation: collect boundary pixels and exhaustively
    // evaluate the percentile/mean definitions
    auto boundary = [](const LabelMask& m) {
        std::vector<std::pair<int, int>> out;
        for (int y = 0; y < m.h; ++y)
            for (int x = 0; x < m.w; ++x) {
                if (m.at(y, x) != 1) continue;
                const bool edge = y == 0 || x == 0 || y == m.h - 1 || x == m.w - 1;
                if (edge || m.at(y - 1, x) != 1 || m.at(y + 1, x) != 1 || m.at(y, x - 1) != 1 ||
                    m.at(y, x + 1) != 1) {
                    out.push_back({y, x});
                }
            }
        return out;
    };
    const auto ba = boundary(a);
    const auto bb = boundary(b);
    auto directed = [](const std::vector<std::pair<int, int>>& f,
                       const std::vector<std::pair<int, int>>& t) {
        std::vector<double> d;
        for (auto& p : f) {
            double best = 1e18;
            for (auto& q : t) {
                const double dd = std::hypot(p.first - q.first, p.second - q.second);
                best = std::min(best, dd);
            }
            d.push_back(best);
        }
        return d;
    };
    auto pct95 = [](std::vector<double> d) {
        std::sort(d.begin(), d.end());
        const double rank = 0.95 * (d.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(rank);
        const double frac = rank - lo;
        return lo + 1 < d.size() ? d[lo] + frac * (d[lo + 1] - d[lo]) : d.back();
    };
    const auto dab = directed(ba, bb);
    const auto dba = directed(bb, ba);
    const double hd_expect = std::max(pct95(dab), pct95(dba));
    double asd_expect = 0;
    for (double v : dab) asd_expect += v;
    for (double v : dba) asd_expect += v;
    asd_expect /= (dab.size() + dba.size());

    const SurfaceDistances sd = surface_distances(a, b, 1);
    EXPECT_DOUBLE_EQ(sd.hd95, hd_expect);
    EXPECT_DOUBLE_EQ(sd.asd, asd_expect);
}

TEST(Surface, EmptySurfaceThrows) {
    const LabelMask a = box_mask(8, 8, 2, 4, 2, 4);
    const LabelMask empty(8, 8, 0);
    EXPECT_THROW(surface_distances(a, empty, 1), EmptySurface);
    EXPECT_THROW(surface_distances(empty, a, 1), EmptySurface);
}

TEST(Surface, SymmetricAndTranslationInvariant) {
    const LabelMask a = box_mask(32, 32, 4, 12, 6, 14);
    const LabelMask b = box_mask(32, 32, 6, 16, 8, 15);
    const SurfaceDistances s1 = surface_distances(a, b, 1);
    const SurfaceDistances s2 = surface_distances(b, a, 1);
    EXPECT_DOUBLE_EQ(s1.hd95, s2.hd95);
    EXPECT_DOUBLE_EQ(s1.asd, s2.asd);

    const LabelMask at = box_mask(32, 32, 9, 17, 11, 19);
    const LabelMask bt = box_mask(32, 32, 11, 21, 13, 20);
    const SurfaceDistances s3 = surface_distances(at, bt, 1);
    EXPECT_DOUBLE_EQ(s1.hd95, s3.hd95);
    EXPECT_DOUBLE_EQ(s1.asd, s3.asd);
}

TEST(Percentile, LinearInterpolationBetweenOrderStatistics) {
    EXPECT_DOUBLE_EQ(percentile_linear({1, 2, 3, 4}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(percentile_linear({4, 1, 3, 2}, 0.95), 3.85);
    EXPECT_DOUBLE_EQ(percentile_linear({7}, 0.95), 7.0);
}

TEST(Folds, PartitionIsDisjointAndCovering) {
    const auto folds = make_folds(23, 5, 99);
    std::vector<int> seen(23, 0);
    for (const auto& f : folds)
        for (int i : f) seen[i]++;
    for (int c : seen) EXPECT_EQ(c, 1);
    for (const auto& f : folds) {
        EXPECT_GE(f.size(), 4u);
        EXPECT_LE(f.size(), 5u);
    }
}

// FD probe of the segmentation loss gradient w.r.t. logits (64-bit).
TEST(SegLoss, GradientMatchesFiniteDifferences) {
    const int h = 6, w = 6;
    Rng rng(41);
    Chw<double> logits(kNumClasses, h, w);
    for (auto& v : logits.v) v = rng.normal();
    LabelMask gt(h, w);
    for (auto& v : gt.v) v = static_cast<std::uint8_t>(rng.uniform_index(3));

    SegLossWeights weights;
    Chw<double> dlogits;
    seg_loss(logits, gt, weights, &dlogits);

    const double hstep = 1e-6;
    for (int probe = 0; probe < 40; ++probe) {
        const std::size_t j = rng.uniform_index(logits.v.size());
        const double orig = logits.v[j];
        logits.v[j] = orig + hstep;
        const double jp = seg_loss(logits, gt, weights, nullptr);
        logits.v[j] = orig - hstep;
        const double jm = seg_loss(logits, gt, weights, nullptr);
        logits.v[j] = orig;
        const double fd = (jp - jm) / (2.0 * hstep);
        const double an = dlogits.v[j];
        const double denom = std::max({1e-7, std::abs(fd), std::abs(an)});
        EXPECT_LT(std::abs(fd - an) / denom, 1e-4) << "entry " << j;
    }
}

// FD probe through the head: gradients w.r.t. head weights and the embedding
// field.
TEST(SegHeadTest, BackwardMatchesFiniteDifferences) {
    const int h = 4, w = 4, d = 5;
    Rng rng(43);
    EmbeddingField<double> field(h, w, d);
    for (auto& v : field.v) v = rng.normal();
    SegHead<double> head = SegHead<double>::make(d, 44);
    LabelMask gt(h, w);
    for (auto& v : gt.v) v = static_cast<std::uint8_t>(rng.uniform_index(3));
    SegLossWeights weights;

    auto loss_of = [&]() {
        const Chw<double> logits = seg_logits(head, field);
        return seg_loss(logits, gt, weights, nullptr);
    };

    const Chw<double> logits = seg_logits(head, field);
    Chw<double> dlogits;
    seg_loss(logits, gt, weights, &dlogits);
    SegHead<double> dhead;
    dhead.weight = make_tensor<double>("seg_head.weight", head.weight.shape);
    dhead.bias = make_tensor<double>("seg_head.bias", head.bias.shape);
    EmbeddingField<double> dfield;
    seg_head_backward(head, field, dlogits, dhead, dfield);

    const double hstep = 1e-6;
    for (int probe = 0; probe < 20; ++probe) {
        const std::size_t j = rng.uniform_index(head.weight.v.size());
        const double orig = head.weight.v[j];
        head.weight.v[j] = orig + hstep;
        const double jp = loss_of();
        head.weight.v[j] = orig - hstep;
        const double jm = loss_of();
        head.weight.v[j] = orig;
        const double fd = (jp - jm) / (2.0 * hstep);
        EXPECT_NEAR(dhead.weight.v[j], fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
    for (int probe = 0; probe < 20; ++probe) {
        const std::size_t j = rng.uniform_index(field.v.size());
        const double orig = field.v[j];
        field.v[j] = orig + hstep;
        const double jp = loss_of();
        field.v[j] = orig - hstep;
        const double jm = loss_of();
        field.v[j] = orig;
        const double fd = (jp - jm) / (2.0 * hstep);
        EXPECT_NEAR(dfield.v[j], fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
}

TEST(SegPredict, PerfectLogitsReproduceMask) {
    const LabelMask gt = box_mask(8, 8, 2, 6, 2, 6, 2);
    Chw<float> logits(kNumClasses, 8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            logits.v[static_cast<std::size_t>(gt.at(y, x)) * 64 + y * 8 + x] = 10.0f;
    const LabelMask pred = seg_predict(logits);
    EXPECT_EQ(pred, gt);
    EXPECT_DOUBLE_EQ(dice(pred, gt, 2), 1.0);
    const SurfaceDistances sd = surface_distances(pred, gt, 2);
    EXPECT_DOUBLE_EQ(sd.hd95, 0.0);
    EXPECT_DOUBLE_EQ(sd.asd, 0.0);
}

// Twenty phantoms, a tiny net, ten epochs: the recorded loss curve must
// trend downward.
TEST(Finetune, LossDecreasesOverFirstTenEpochs) {
    Rng rng(51);
    std::vector<Sample> samples;
    for (int i = 0; i < 20; ++i) {
        Sample s;
        s.index = i;
        s.spec = random_phantom_spec(rng, {16, 16}, i % 2 == 0, Scanner::A, 0.01);
        auto [img, mask] = render_phantom(s.spec);
        s.image = std::move(img);
        s.mask = std::move(mask);
        samples.push_back(std::move(s));
    }
    NetConfig net_cfg;
    net_cfg.base_channels = 4;
    net_cfg.embed_dim = 4;
    FinetuneConfig fc;
    fc.folds = 2;
    fc.epochs = 10;
    fc.lr = 0.05;
    fc.seed = 7;
    const auto models = finetune(std::nullopt, net_cfg, samples, fc);
    ASSERT_EQ(models.size(), 2u);
    for (const auto& fm : models) {
        ASSERT_EQ(fm.epoch_losses.size(), 10u);
        const double head = (fm.epoch_losses[0] + fm.epoch_losses[1]) / 2.0;
        const double tail = (fm.epoch_losses[8] + fm.epoch_losses[9]) / 2.0;
        EXPECT_LT(tail, head);
    }
}
