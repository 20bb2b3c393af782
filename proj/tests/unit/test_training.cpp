#include <gtest/gtest.h>

#include "sinkstream/training.hpp"

using namespace sinkstream;

namespace {

ModelConfig small_train_config() {
    ModelConfig c;
    c.D = 8, c.S = 4, c.A = 3, c.N = 3, c.K = 2, c.L = 2, c.H = 2, c.B_int = 16, c.head_width = 16;
    c.batch_size = 2;
    c.diffusion_repeats = 2;
    c.T_diff_train = 100;
    c.T_diff_sample = 4;
    return c;
}

double max_abs(const Weights<double>& w) {
    double m = 0;
    w.for_each([&](const std::string&, const Matrix<double>& g) {
        if (g.size()) m = std::max(m, g.cwiseAbs().maxCoeff());
    });
    return m;
}

} // namespace

TEST(TrainExample, Structure) {
    const ModelConfig cfg = small_train_config();
    const auto ex = make_train_example(cfg, Rng(1, "ex"));
    ASSERT_EQ(ex.inputs.size(), 3u);
    ASSERT_EQ(ex.targets.size(), 2u);
    ASSERT_EQ(ex.draws.size(), 2u);
    EXPECT_EQ(ex.inputs.front().position, 1);
    EXPECT_FALSE(ex.inputs.front().audio.has_value());
    for (std::size_t f = 1; f < ex.inputs.size(); ++f) EXPECT_TRUE(ex.inputs[f].audio.has_value());
    for (const auto& d : ex.draws) {
        EXPECT_GE(static_cast<double>(d.masked.size()), 0.7 * cfg.S);
        EXPECT_EQ(d.ts.size(), d.masked.size() * 2);
        EXPECT_EQ(d.eps.rows(), static_cast<Index>(d.ts.size()));
    }
}

TEST(TrainExample, InputsPerturbedTargetsClean) {
    ModelConfig cfg = small_train_config();
    cfg.gamma_max = 0.1;
    const auto noisy = make_train_example(cfg, Rng(2, "ex"));
    cfg.input_noise = false;
    const auto clean = make_train_example(cfg, Rng(2, "ex"));
    EXPECT_EQ(noisy.targets, clean.targets);
    EXPECT_EQ(noisy.inputs.front().visual, clean.inputs.front().visual);
    // Input f+1 is the frame before target f, so clean inputs chain onto the targets.
    EXPECT_EQ(clean.inputs[2].visual, clean.targets[0]);
    EXPECT_NE(noisy.inputs[2].visual, clean.inputs[2].visual);
}

TEST(TrainExample, TwoPhaseFirstHalf) {
    ModelConfig cfg = small_train_config();
    cfg.two_phase = true;
    cfg.train_steps = 10;
    const auto early = phase_options(cfg, 2);
    EXPECT_TRUE(early.zero_intensity);
    EXPECT_TRUE(early.fixed_offset);
    EXPECT_FALSE(phase_options(cfg, 5).zero_intensity);
    const auto ex = make_train_example(cfg, Rng(3, "ex"), early);
    for (std::size_t f = 0; f < ex.inputs.size(); ++f) {
        EXPECT_EQ(ex.inputs[f].intensity, 0.0);
        EXPECT_EQ(ex.inputs[f].position, static_cast<int>(f) + 1);
    }
}

TEST(Optimizer, LearningRateDecaysInFinalThirty) {
    const ModelConfig cfg = small_train_config();
    const Weights<double> w = init_weights<double>(cfg);
    RmsOptimizer<double> opt(w, 1e-2, 100);
    Weights<double> p = w;
    const Weights<double> g = zeros_like(w);
    for (int i = 0; i < 70; ++i) {
        EXPECT_DOUBLE_EQ(opt.learning_rate(), 1e-2);
        opt.update(p, g, cfg);
    }
    for (int i = 70; i < 100; ++i) {
        EXPECT_LE(opt.learning_rate(), 1e-2);
        opt.update(p, g, cfg);
    }
    EXPECT_NEAR(opt.learning_rate(), 5e-4, 1e-12);
}

TEST(Optimizer, FixedTablesNeverMove) {
    const ModelConfig cfg = small_train_config();
    Weights<double> w = init_weights<double>(cfg);
    const Weights<double> before = w;
    Weights<double> g = zeros_like(w);
    g.for_each([](const std::string&, Matrix<double>& m) { m.setOnes(); });
    RmsOptimizer<double> opt(w, 1e-2, 10);
    const double norm = opt.update(w, g, cfg);
    EXPECT_GT(norm, 1.0);
    EXPECT_EQ(w.pos_table, before.pos_table);
    EXPECT_EQ(w.int_table, before.int_table);
    EXPECT_NE(w.head_w1, before.head_w1);
}

TEST(Training, OverfitsRepeatedBatch) {
    ModelConfig cfg = small_train_config();
    cfg.learning_rate = 3e-3;
    const auto batch = make_train_batch(cfg, Rng(4, "overfit"));
    Weights<double> w = init_weights<double>(cfg);
    RmsOptimizer<double> opt(w, cfg.learning_rate, 200);
    std::vector<double> losses;
    for (int i = 0; i < 200; ++i) losses.push_back(train_step(batch, w, cfg, opt).loss);
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) first += losses[static_cast<std::size_t>(i)], last += losses[losses.size() - 1 - i];
    EXPECT_LT(last, 0.5 * first);
}

TEST(Training, Deterministic) {
    ModelConfig cfg = small_train_config();
    cfg.train_steps = 4;
    std::vector<double> a, b;
    const auto wa = train_model(cfg, [&](int, const StepResult& r, const Weights<double>&) { a.push_back(r.loss); });
    const auto wb = train_model(cfg, [&](int, const StepResult& r, const Weights<double>&) { b.push_back(r.loss); });
    EXPECT_EQ(a, b);
    EXPECT_EQ(wa.head_w1, wb.head_w1);
    EXPECT_EQ(wa.fca[0].wq, wb.fca[0].wq);
}

TEST(Training, NonFiniteLossAborts) {
    const ModelConfig cfg = small_train_config();
    Weights<double> w = init_weights<double>(cfg);
    w.head_b3(0, 0) = std::numeric_limits<double>::quiet_NaN();
    RmsOptimizer<double> opt(w, 1e-3, 1);
    EXPECT_THROW(train_step(make_train_batch(cfg, Rng(5, "nan")), w, cfg, opt), NonFiniteLoss);
}

TEST(Gradcheck, TinyConfigWithinTolerance) {
    const auto report = gradcheck(tiny_config());
    EXPECT_LE(report.max_rel_error, 1e-3) << report.worst;
    EXPECT_GT(report.loss, 0);
}

TEST(Gradcheck, OracleHeadHasZeroLossAndGradient) {
    const ModelConfig cfg = tiny_config();
    const auto batch = make_train_batch(cfg, Rng(6, "oracle"));
    const auto [loss, grad] = loss_and_grad(init_weights<double>(cfg), cfg, batch, LeafMode::kAll, true);
    EXPECT_EQ(loss, 0.0);
    EXPECT_LT(max_abs(grad), 1e-12);
}

TEST(Gradcheck, NoAdaLNDropsModulationGradients) {
    ModelConfig cfg = tiny_config();
    const auto batch = make_train_batch(cfg, Rng(7, "adaln"));
    const auto with = loss_and_grad(init_weights<double>(cfg), cfg, batch).second;
    EXPECT_GT(with.scale_w.norm(), 0);
    EXPECT_GT(with.shift_w.norm(), 0);
    cfg.adaln_sink = false;
    const auto without = loss_and_grad(init_weights<double>(cfg), cfg, batch).second;
    EXPECT_EQ(without.scale_w.norm(), 0);
    EXPECT_EQ(without.scale_b.norm(), 0);
    EXPECT_EQ(without.shift_w.norm(), 0);
    EXPECT_EQ(without.shift_b.norm(), 0);
    EXPECT_GT(without.head_w1.norm(), 0);
}
