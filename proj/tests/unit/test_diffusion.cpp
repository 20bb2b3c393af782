#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "sinkstream/diffusion.hpp"
#include "sinkstream/verify.hpp"

using namespace sinkstream;

namespace {

Matrix<double> normal(Index r, Index c, Rng& rng) {
    Matrix<double> m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

} // namespace

TEST(Schedule, LinearBetas) {
    const NoiseSchedule s(1000, 1e-4, 2e-2);
    EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
    EXPECT_DOUBLE_EQ(s.beta(1000), 2e-2);
    EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0);
    double ab = 1;
    for (int t = 1; t <= 1000; ++t) ab *= 1 - s.beta(t);
    EXPECT_NEAR(s.alpha_bar(1000), ab, 1e-15);
    EXPECT_LT(s.alpha_bar(1000), 1e-4);
    EXPECT_THROW(NoiseSchedule(10, 0.2, 0.1), std::invalid_argument);
}

TEST(Schedule, SamplingTimesteps) {
    EXPECT_EQ(sampling_timesteps(1000, 1), std::vector<int>{1000});
    const auto ts = sampling_timesteps(1000, 8);
    ASSERT_EQ(ts.size(), 8u);
    EXPECT_EQ(ts.front(), 1);
    EXPECT_EQ(ts.back(), 1000);
    EXPECT_TRUE(std::is_sorted(ts.begin(), ts.end()));
    EXPECT_THROW(sampling_timesteps(10, 11), std::invalid_argument);
}

TEST(QSample, Limits) {
    Rng rng(1, "q");
    const Matrix<double> x = normal(3, 4, rng), eps = normal(3, 4, rng);
    EXPECT_EQ(q_sample(x, 1.0, eps), x);
    EXPECT_EQ(q_sample(x, 0.0, eps), eps);
    const Matrix<double> out = q_sample<double>(Matrix<double>::Zero(1, 4), 0.25, Matrix<double>::Ones(1, 4));
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(out(0, i), std::sqrt(0.75), 1e-15);
    const NoiseSchedule s(1000, 1e-4, 2e-2);
    EXPECT_THROW(q_sample(x, 0, eps, s), std::out_of_range);
}

TEST(Loss, OracleAndZeroHead) { EXPECT_TRUE(check_diffusion_limits(ModelConfig{}, 10000).pass); }

TEST(Loss, OracleIsExactlyZero) {
    const NoiseSchedule s(1000, 1e-4, 2e-2);
    Rng rng(2, "loss");
    const Matrix<double> x = normal(5, 16, rng), z = normal(5, 16, rng);
    std::vector<int> ts;
    Matrix<double> eps;
    draw_loss_noise(5, 16, 1000, rng, ts, eps);
    const EpsPredictor<double> oracle = [&](const Matrix<double>&, const std::vector<int>&, const Matrix<double>&) {
        return eps;
    };
    EXPECT_EQ(diffusion_loss(oracle, s, z, x, ts, eps), 0.0);
}

TEST(Loss, TapeAndPlainAgree) {
    ModelConfig cfg;
    cfg.D = 8, cfg.H = 2, cfg.head_width = 16;
    const Weights<double> w = random_weights(cfg);
    const NoiseSchedule s(cfg);
    Rng rng(3, "loss");
    const Matrix<double> x = normal(6, cfg.D, rng), z = normal(6, cfg.D, rng);
    std::vector<int> ts;
    Matrix<double> eps;
    draw_loss_noise(6, cfg.D, cfg.T_diff_train, rng, ts, eps);
    ad::Tape<double> tape(false);
    const auto b = bind(tape, w, cfg);
    const double plain = diffusion_loss(head_predictor(tape, b, cfg), s, z, x, ts, eps);
    const double taped = diffusion_loss(tape, b, cfg, s, tape.constant(z), x, ts, eps).value()(0, 0);
    EXPECT_NEAR(plain, taped, 1e-12);
}

TEST(Sampler, SingleStepZeroEpsIsScaledNoise) {
    const NoiseSchedule s(1000, 1e-4, 2e-2);
    const EpsPredictor<double> zero = [](const Matrix<double>& x, const std::vector<int>&, const Matrix<double>&) {
        return Matrix<double>::Zero(x.rows(), x.cols());
    };
    const Matrix<double> z = Matrix<double>::Zero(3, 4);
    Rng rng(4, "sample");
    Rng replay = rng;
    const Matrix<double> x0 = ddpm_sample(zero, s, z, 1, rng);
    Matrix<double> xT(3, 4);
    for (Index r = 0; r < 3; ++r)
        for (Index c = 0; c < 4; ++c) xT(r, c) = replay.normal();
    EXPECT_LT((x0 - xT / std::sqrt(s.alpha_bar(1000))).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Sampler, Deterministic) {
    ModelConfig cfg;
    const Weights<double> w = random_weights(cfg);
    const NoiseSchedule s(cfg);
    Rng zr(5, "z");
    const Matrix<double> z = normal(4, cfg.D, zr);
    ad::Tape<double> tape(false);
    const auto b = bind(tape, w, cfg);
    const auto pred = head_predictor(tape, b, cfg);
    Rng r1(6, "sample"), r2(6, "sample");
    EXPECT_EQ(ddpm_sample(pred, s, z, 8, r1), ddpm_sample(pred, s, z, 8, r2));
}

TEST(Sampler, FiniteOverManyConditions) {
    ModelConfig cfg;
    const Weights<double> w = random_weights(cfg);
    const NoiseSchedule s(cfg);
    Rng zr(7, "z");
    const Matrix<double> z = 3.0 * normal(1000, cfg.D, zr);
    ad::Tape<double> tape(false);
    const auto b = bind(tape, w, cfg);
    Rng r(8, "sample");
    EXPECT_TRUE(ddpm_sample(head_predictor(tape, b, cfg), s, z, cfg.T_diff_sample, r).allFinite());
}

TEST(Head, RowsAreIndependent) {
    ModelConfig cfg;
    const Weights<double> w = random_weights(cfg);
    Rng rng(9, "head");
    const Matrix<double> x = normal(5, cfg.D, rng), z = normal(5, cfg.D, rng);
    const std::vector<int> ts{1, 10, 100, 500, 1000};
    ad::Tape<double> tape(false);
    const auto b = bind(tape, w, cfg);
    const auto pred = head_predictor(tape, b, cfg);
    const Matrix<double> out = pred(x, ts, z);
    std::vector<int> perm{3, 0, 4, 1, 2};
    Matrix<double> xp(5, cfg.D), zp(5, cfg.D);
    std::vector<int> tp(5);
    for (int i = 0; i < 5; ++i) {
        xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
        zp.row(i) = z.row(perm[static_cast<std::size_t>(i)]);
        tp[static_cast<std::size_t>(i)] = ts[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    const Matrix<double> outp = pred(xp, tp, zp);
    for (int i = 0; i < 5; ++i)
        EXPECT_LT((outp.row(i) - out.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Loss, JointCoordinatePermutationInvariance) {
    ModelConfig cfg;
    cfg.D = 6, cfg.H = 2, cfg.head_width = 10;
    Weights<double> w = random_weights(cfg);
    w.head_b3 = Matrix<double>::Random(1, cfg.D);
    const NoiseSchedule s(cfg);
    Rng rng(10, "perm");
    const Matrix<double> x = normal(7, cfg.D, rng), z = normal(7, cfg.D, rng);
    std::vector<int> ts;
    Matrix<double> eps;
    draw_loss_noise(7, cfg.D, cfg.T_diff_train, rng, ts, eps);

    const std::vector<int> perm{2, 0, 5, 1, 4, 3};
    auto cols = [&](const Matrix<double>& m) {
        Matrix<double> out(m.rows(), m.cols());
        for (int j = 0; j < cfg.D; ++j) out.col(j) = m.col(perm[static_cast<std::size_t>(j)]);
        return out;
    };
    Weights<double> wp = w;
    for (int j = 0; j < cfg.D; ++j) {
        const int p = perm[static_cast<std::size_t>(j)];
        wp.head_w1.row(j) = w.head_w1.row(p);
        wp.head_w1.row(cfg.D + j) = w.head_w1.row(cfg.D + p);
        wp.head_w3.col(j) = w.head_w3.col(p);
        wp.head_b3(0, j) = w.head_b3(0, p);
    }
    ad::Tape<double> tape(false);
    const auto b = bind(tape, w, cfg), bp = bind(tape, wp, cfg);
    const double a = diffusion_loss(head_predictor(tape, b, cfg), s, z, x, ts, eps);
    const double c = diffusion_loss(head_predictor(tape, bp, cfg), s, cols(z), cols(x), ts, cols(eps));
    EXPECT_NEAR(a, c, 1e-12);
}

// Trains only the head on a near-deterministic map z -> x, then checks that
// more sampler steps land closer to a 64-step reference sample.
TEST(Sampler, MoreStepsApproachFineSchedule) {
    ModelConfig cfg;
    cfg.D = 4, cfg.H = 2, cfg.head_width = 32;
    Weights<double> w = init_weights<double>(cfg);
    const NoiseSchedule s(cfg);
    Rng data(11, "consistency");
    const Matrix<double> mix = normal(cfg.D, cfg.D, data);
    auto target = [&](const Matrix<double>& z) { return (z * mix).array().tanh().matrix().eval(); };

    std::vector<double> v;
    Weights<double> m = zeros_like(w);
    const int kSteps = 5000;
    for (int step = 0; step < kSteps; ++step) {
        Rng r = data.child(static_cast<std::uint64_t>(step));
        const Matrix<double> z = normal(64, cfg.D, r);
        std::vector<int> ts;
        Matrix<double> eps;
        draw_loss_noise(64, cfg.D, cfg.T_diff_train, r, ts, eps);
        ad::Tape<double> tape(true);
        const auto b = bind(tape, w, cfg, LeafMode::kTrainable);
        const auto loss = diffusion_loss(tape, b, cfg, s, tape.constant(z), target(z), ts, eps);
        tape.backward(loss);
        // Plain RMS-scaled step on the head tensors only.
        auto upd = [&](Matrix<double>& p, Matrix<double>& acc, const ad::Var<double>& var) {
            const Matrix<double> g = tape.grad(var);
            acc = 0.99 * acc + 0.01 * g.cwiseProduct(g);
            p.array() -= 3e-3 * (1.0 - 0.95 * step / kSteps) * g.array() / (acc.array().sqrt() + 1e-8);
        };
        upd(w.head_w1, m.head_w1, b.head_w1), upd(w.head_b1, m.head_b1, b.head_b1);
        upd(w.head_tw, m.head_tw, b.head_tw), upd(w.head_w2, m.head_w2, b.head_w2);
        upd(w.head_b2, m.head_b2, b.head_b2), upd(w.head_w3, m.head_w3, b.head_w3);
        upd(w.head_b3, m.head_b3, b.head_b3);
    }

    Rng zr(12, "consistency-z");
    const Matrix<double> z = normal(512, cfg.D, zr);
    ad::Tape<double> tape(false);
    const auto b = bind(tape, w, cfg);
    const auto pred = head_predictor(tape, b, cfg);
    auto sample = [&](int steps) {
        Rng r(13, "consistency-sample");
        return ddpm_sample(pred, s, z, steps, r);
    };
    const Matrix<double> ref = sample(64);
    const double d4 = (sample(4) - ref).squaredNorm(), d8 = (sample(8) - ref).squaredNorm(),
                 d16 = (sample(16) - ref).squaredNorm();
    EXPECT_GT(d4, d8);
    EXPECT_GT(d8, d16);
}
