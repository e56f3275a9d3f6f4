#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "nfisac/cta_operator.hpp"

using namespace nfisac;

namespace {

TokenMatrix tokens(Eigen::Index l, Eigen::Index d, Branch b, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    TokenMatrix t;
    t.branch = b;
    t.tokens.resize(l, d);
    for (Eigen::Index i = 0; i < l; ++i)
        for (Eigen::Index c = 0; c < d; ++c) t.tokens(i, c) = n(rng);
    return t;
}

// softmax written out per entry
RMat naive_softmax(const RMat& q, const RMat& k, double da) {
    RMat out(q.rows(), k.rows());
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        double z = 0.0;
        for (Eigen::Index jj = 0; jj < k.rows(); ++jj) z += std::exp(q.row(i).dot(k.row(jj)) / std::sqrt(da));
        for (Eigen::Index jj = 0; jj < k.rows(); ++jj) out(i, jj) = std::exp(q.row(i).dot(k.row(jj)) / std::sqrt(da)) / z;
    }
    return out;
}

}  // namespace

TEST(Attention, MatchesNaiveSoftmax) {
    const auto q = tokens(5, 8, Branch::semantic, 1).tokens;
    const auto k = tokens(7, 8, Branch::geometric, 2).tokens;
    EXPECT_LE((attention_map(q, k, 8.0) - naive_softmax(q, k, 8.0)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Attention, RowsStochasticEvenForHugeLogits) {
    const RMat q = 1e3 * tokens(4, 3, Branch::semantic, 3).tokens;
    const RMat k = 1e3 * tokens(6, 3, Branch::geometric, 4).tokens;
    const RMat a = attention_map(q, k, 3.0);
    EXPECT_TRUE(attention_rows_stochastic(a));
}

TEST(Attention, SingleKeyIsAllOnes) {
    const RMat a = attention_map(tokens(5, 4, Branch::semantic, 5).tokens, tokens(1, 4, Branch::geometric, 6).tokens, 4.0);
    EXPECT_LE((a - RMat::Ones(5, 1)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, StochasticCheckRejects) {
    RMat m(1, 2);
    m << 0.6, 0.6;
    EXPECT_FALSE(attention_rows_stochastic(m));
    m << 1.2, -0.2;
    EXPECT_FALSE(attention_rows_stochastic(m));
    m << 0.25, 0.75;
    EXPECT_TRUE(attention_rows_stochastic(m));
}

TEST(CrossAttend, ShapesAndStochasticMaps) {
    const auto w = random_cta_weights(32, 16, 1);
    const auto out = cross_attend(tokens(16, 32, Branch::semantic, 1), tokens(12, 32, Branch::geometric, 2), w);
    EXPECT_EQ(out.f_cls.tokens.rows(), 16);
    EXPECT_EQ(out.f_cls.tokens.cols(), 32);
    EXPECT_EQ(out.f_loc.tokens.rows(), 12);
    EXPECT_EQ(out.attention_cls.rows(), 16);
    EXPECT_EQ(out.attention_cls.cols(), 12);
    EXPECT_EQ(out.attention_loc.rows(), 12);
    EXPECT_EQ(out.attention_loc.cols(), 16);
    EXPECT_TRUE(attention_rows_stochastic(out.attention_cls));
    EXPECT_TRUE(attention_rows_stochastic(out.attention_loc));
    EXPECT_EQ(out.f_cls.branch, Branch::semantic);
    EXPECT_EQ(out.f_loc.branch, Branch::geometric);
}

TEST(CrossAttend, MatchesDirectFormula) {
    const auto w = random_cta_weights(6, 3, 9);
    const auto fc = tokens(4, 6, Branch::semantic, 10), fl = tokens(5, 6, Branch::geometric, 11);
    const auto out = cross_attend(fc, fl, w);
    const RMat a = naive_softmax(fc.tokens * w.wq_cls, fl.tokens * w.wk_loc, 3.0);
    const RMat expect = fc.tokens + 0.1 * a * (fl.tokens * w.wv_loc * w.wv_loc.transpose());
    EXPECT_LE((out.f_cls.tokens - expect).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(CrossAttend, ZeroMixingIsExactIdentity) {
    auto w = random_cta_weights(8, 4, 2);
    w.alpha_cls = 0.0;
    w.alpha_loc = 0.0;
    const auto fc = tokens(3, 8, Branch::semantic, 3), fl = tokens(4, 8, Branch::geometric, 4);
    const auto out = cross_attend(fc, fl, w);
    EXPECT_TRUE(out.f_cls.tokens == fc.tokens);
    EXPECT_TRUE(out.f_loc.tokens == fl.tokens);
}

TEST(CrossAttend, QueryPermutationEquivariant) {
    const auto w = random_cta_weights(8, 4, 5);
    const auto fc = tokens(6, 8, Branch::semantic, 6), fl = tokens(5, 8, Branch::geometric, 7);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(8));
    TokenMatrix pc = fc;
    for (int i = 0; i < 6; ++i) pc.tokens.row(i) = fc.tokens.row(perm[i]);
    const auto a = cross_attend(fc, fl, w);
    const auto b = cross_attend(pc, fl, w);
    for (int i = 0; i < 6; ++i)
        EXPECT_LE((b.f_cls.tokens.row(i) - a.f_cls.tokens.row(perm[i])).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(CrossAttend, KeyPermutationInvariant) {
    const auto w = random_cta_weights(8, 4, 12);
    const auto fc = tokens(6, 8, Branch::semantic, 13), fl = tokens(5, 8, Branch::geometric, 14);
    TokenMatrix rev = fl;
    rev.tokens = fl.tokens.colwise().reverse();
    const auto a = cross_attend(fc, fl, w), b = cross_attend(fc, rev, w);
    EXPECT_LE((a.f_cls.tokens - b.f_cls.tokens).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(CrossAttend, AttentionWidthScalingInvariance) {
    // multiplying d_a by 4 while scaling Q and K projections by sqrt(2) leaves the maps unchanged
    const auto w = random_cta_weights(8, 4, 15);
    CtaWeights wide;
    auto widen = [](const RMat& m, double s) {
        RMat out = RMat::Zero(m.rows(), 4 * m.cols());
        out.leftCols(m.cols()) = s * m;
        return out;
    };
    wide.wq_cls = widen(w.wq_cls, std::sqrt(2.0));
    wide.wk_cls = widen(w.wk_cls, std::sqrt(2.0));
    wide.wv_cls = widen(w.wv_cls, 1.0);
    wide.wq_loc = widen(w.wq_loc, std::sqrt(2.0));
    wide.wk_loc = widen(w.wk_loc, std::sqrt(2.0));
    wide.wv_loc = widen(w.wv_loc, 1.0);
    const auto fc = tokens(5, 8, Branch::semantic, 16), fl = tokens(7, 8, Branch::geometric, 17);
    const auto a = cross_attend(fc, fl, w), b = cross_attend(fc, fl, wide);
    EXPECT_LE((a.attention_cls - b.attention_cls).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LE((a.f_loc.tokens - b.f_loc.tokens).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(CrossAttend, RejectsMismatchedShapes) {
    const auto w = random_cta_weights(8, 4, 1);
    EXPECT_THROW(cross_attend(tokens(3, 8, Branch::semantic, 1), tokens(3, 6, Branch::geometric, 2), w), InvalidConfig);
    EXPECT_THROW(cross_attend(tokens(3, 6, Branch::semantic, 1), tokens(3, 6, Branch::geometric, 2), w), InvalidConfig);
    TokenMatrix empty;
    empty.tokens.resize(0, 8);
    EXPECT_THROW(cross_attend(empty, tokens(3, 8, Branch::geometric, 2), w), InvalidConfig);
    auto bad = w;
    bad.wv_loc.resize(8, 3);
    EXPECT_THROW(cross_attend(tokens(3, 8, Branch::semantic, 1), tokens(3, 8, Branch::geometric, 2), bad), InvalidConfig);
}

TEST(RandomWeights, SeededAndScaled) {
    const auto a = random_cta_weights(256, 64, 3), b = random_cta_weights(256, 64, 3);
    EXPECT_TRUE(a.wq_cls == b.wq_cls);
    EXPECT_FALSE(a.wq_cls == random_cta_weights(256, 64, 4).wq_cls);
    const double var = a.wq_cls.array().square().mean();
    EXPECT_NEAR(var, 1.0 / 256.0, 0.1 / 256.0);
    EXPECT_EQ(a.alpha_cls, 0.1);
}

TEST(Pool, MeanAndProjection) {
    TokenMatrix t;
    t.tokens.resize(2, 3);
    t.tokens << 1, 2, 3, 3, 4, 5;
    EXPECT_TRUE(pool(t) == Eigen::Vector3d(2, 3, 4));
    RMat p(1, 3);
    p << 1, 1, 1;
    EXPECT_DOUBLE_EQ(pool(t, p)[0], 9.0);
    RMat bad(1, 2);
    EXPECT_THROW(pool(t, bad), InvalidConfig);
}
