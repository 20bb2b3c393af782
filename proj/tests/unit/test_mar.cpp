#include <gtest/gtest.h>

#include "sinkstream/mar.hpp"
#include "sinkstream/verify.hpp"

using namespace sinkstream;

namespace {

ModelConfig mar_config(int S, int K) {
    ModelConfig c;
    c.D = 8, c.S = S, c.A = 3, c.N = 2, c.K = K, c.L = 1, c.H = 2, c.B_int = 8, c.head_width = 8;
    return c;
}

Matrix<double> normal(Index r, Index c, Rng& rng) {
    Matrix<double> m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

} // namespace

TEST(GroupPlan, Degenerate) {
    Rng rng(1, "plan");
    const auto one = make_group_plan(16, 1, rng);
    ASSERT_EQ(one.size(), 1);
    EXPECT_EQ(one.group(0).size(), 16u);
    const auto singles = make_group_plan(16, 16, rng);
    ASSERT_EQ(singles.size(), 16);
    for (const auto& g : singles.groups) EXPECT_EQ(g.size(), 1u);
    EXPECT_EQ(check_group_plan(singles, 16), "");
}

TEST(GroupPlan, FourByFour) {
    Rng rng(2, "plan");
    const auto plan = make_group_plan(16, 4, rng);
    ASSERT_EQ(plan.size(), 4);
    std::vector<int> count(16, 0);
    for (const auto& g : plan.groups) {
        EXPECT_EQ(g.size(), 4u);
        for (int s : g) ++count[static_cast<std::size_t>(s)];
    }
    for (int c : count) EXPECT_EQ(c, 1);
}

TEST(GroupPlan, CheckerCatchesDefects) {
    EXPECT_NE(check_group_plan({{{0, 1}, {1, 2}}}, 3), "");
    EXPECT_NE(check_group_plan({{{0}, {1}}}, 3), "");
    EXPECT_NE(check_group_plan({{{0, 1, 2}, {3}}}, 4), "");
    EXPECT_EQ(check_group_plan({{{0, 1}, {2}}}, 3), "");
}

TEST(GroupPlan, PartitionLaw) { EXPECT_TRUE(check_partition_law(1000, 5).pass); }

TEST(GroupPlan, RandomOrderAndSizes) {
    // With S % K != 0 the larger groups must not always come first.
    Rng rng(3, "plan");
    bool first_small = false;
    for (int i = 0; i < 50 && !first_small; ++i) first_small = make_group_plan(7, 3, rng).group(0).size() == 2;
    EXPECT_TRUE(first_small);
}

TEST(MarCondition, FirstGroupIgnoresTokens) {
    const ModelConfig cfg = mar_config(4, 1);
    const Weights<double> w = random_weights(cfg);
    Rng rng(4, "mar");
    const Matrix<double> hc = normal(2, cfg.D, rng), ha = normal(cfg.S, cfg.D, rng);
    const GroupPlan plan{{{0, 1, 2, 3}}};
    const Matrix<double> z = mar_condition(w, cfg, hc, ha, {}, plan, 0);
    GeneratedTokens<double> junk{{0, normal(1, cfg.D, rng)}};
    EXPECT_EQ(z, mar_condition(w, cfg, hc, ha, junk, plan, 0));
    EXPECT_EQ(z.rows(), 4);
}

TEST(MarCondition, MissingEarlierGroupThrows) {
    const ModelConfig cfg = mar_config(4, 2);
    const Weights<double> w = random_weights(cfg);
    const GroupPlan plan{{{0, 2}, {1, 3}}};
    const Matrix<double> hc = Matrix<double>::Zero(2, cfg.D), ha = Matrix<double>::Zero(cfg.S, cfg.D);
    EXPECT_THROW(mar_condition(w, cfg, hc, ha, {}, plan, 1), std::invalid_argument);
    EXPECT_THROW(mar_condition(w, cfg, hc, ha, {}, plan, 2), std::out_of_range);
}

TEST(MarCondition, TokensMoveWithSlots) {
    const ModelConfig cfg = mar_config(4, 2);
    const Weights<double> w = random_weights(cfg);
    Rng rng(5, "mar");
    const Matrix<double> hc = normal(2, cfg.D, rng), ha = normal(cfg.S, cfg.D, rng);
    const GroupPlan plan{{{0, 2}, {1, 3}}};
    const RowVector<double> a = normal(1, cfg.D, rng), b = normal(1, cfg.D, rng);

    const Matrix<double> z = mar_condition(w, cfg, hc, ha, {{0, a}, {2, b}}, plan, 1);
    // Same slot -> token map built in another order: unchanged.
    GeneratedTokens<double> reordered;
    reordered.emplace(2, b);
    reordered.emplace(0, a);
    EXPECT_EQ(z, mar_condition(w, cfg, hc, ha, reordered, plan, 1));
    // Values swapped between slots: changed.
    const Matrix<double> swapped = mar_condition(w, cfg, hc, ha, {{0, b}, {2, a}}, plan, 1);
    EXPECT_GT((z - swapped).norm(), 1e-8);
}

TEST(MarCondition, ZeroWeightNetworkReturnsInputEmbedding) {
    const ModelConfig cfg = mar_config(4, 2);
    Weights<double> w = random_weights(cfg);
    for (auto& blk : w.mar) {
        blk.wq.setZero(), blk.wk.setZero(), blk.wv.setZero(), blk.wo.setZero();
        blk.w1.setZero(), blk.b1.setZero(), blk.w2.setZero(), blk.b2.setZero();
    }
    Rng rng(6, "mar");
    const Matrix<double> hc = normal(2, cfg.D, rng), ha = normal(cfg.S, cfg.D, rng);
    const GroupPlan plan{{{1, 2}, {0, 3}}};
    const RowVector<double> t1 = normal(1, cfg.D, rng), t2 = normal(1, cfg.D, rng);

    const Matrix<double> z0 = mar_condition(w, cfg, hc, ha, {}, plan, 0);
    for (int i = 0; i < 2; ++i) {
        const int s = plan.group(0)[static_cast<std::size_t>(i)];
        const RowVector<double> expect = w.mask_token.row(0) + w.mar_slot.row(s) + ha.row(s);
        EXPECT_LT((z0.row(i) - expect).cwiseAbs().maxCoeff(), 1e-12);
    }
    // Group 1 slots are still masked, so they too see only the mask token.
    const Matrix<double> z1 = mar_condition(w, cfg, hc, ha, {{1, t1}, {2, t2}}, plan, 1);
    for (int i = 0; i < 2; ++i) {
        const int s = plan.group(1)[static_cast<std::size_t>(i)];
        const RowVector<double> expect = w.mask_token.row(0) + w.mar_slot.row(s) + ha.row(s);
        EXPECT_LT((z1.row(i) - expect).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(MarGenerate, SingleTokenSingleRound) {
    const ModelConfig cfg = mar_config(1, 1);
    const Weights<double> w = random_weights(cfg);
    int calls = 0;
    const GroupSampler<double> sampler = [&](const Matrix<double>& z, int) {
        ++calls;
        return z;
    };
    Rng rng(7, "mar");
    const Matrix<double> out =
        mar_generate(w, cfg, normal(2, cfg.D, rng), normal(1, cfg.D, rng), GroupPlan{{{0}}}, sampler);
    EXPECT_EQ(calls, 1);
    EXPECT_EQ(out.rows(), 1);
}

// Hand composition at S = 4, K = 2 with an identity sampler.
TEST(MarGenerate, ComposesConditionInPlanOrder) {
    const ModelConfig cfg = mar_config(4, 2);
    const Weights<double> w = random_weights(cfg);
    Rng rng(8, "mar");
    const Matrix<double> hc = normal(2, cfg.D, rng), ha = normal(cfg.S, cfg.D, rng);
    const GroupPlan plan{{{3, 0}, {1, 2}}};
    const GroupSampler<double> identity = [](const Matrix<double>& z, int) { return z; };
    const Matrix<double> frame = mar_generate(w, cfg, hc, ha, plan, identity);

    const Matrix<double> z0 = mar_condition(w, cfg, hc, ha, {}, plan, 0);
    const GeneratedTokens<double> after0{{3, z0.row(0)}, {0, z0.row(1)}};
    const Matrix<double> z1 = mar_condition(w, cfg, hc, ha, after0, plan, 1);
    Matrix<double> expect(4, cfg.D);
    expect.row(3) = z0.row(0);
    expect.row(0) = z0.row(1);
    expect.row(1) = z1.row(0);
    expect.row(2) = z1.row(1);
    EXPECT_EQ(frame, expect);
}

TEST(MarGenerate, RejectsBadSamplerShape) {
    const ModelConfig cfg = mar_config(4, 2);
    const Weights<double> w = random_weights(cfg);
    const GroupSampler<double> bad = [](const Matrix<double>& z, int) { return Matrix<double>(z.rows() + 1, z.cols()); };
    const Matrix<double> hc = Matrix<double>::Zero(2, cfg.D), ha = Matrix<double>::Zero(cfg.S, cfg.D);
    EXPECT_THROW(mar_generate(w, cfg, hc, ha, GroupPlan{{{0, 1}, {2, 3}}}, bad), std::runtime_error);
}
