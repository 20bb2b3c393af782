#include <gtest/gtest.h>

#include "sinkstream/attention.hpp"
#include "sinkstream/verify.hpp"

using namespace sinkstream;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.D = 8, c.S = 4, c.A = 3, c.N = 3, c.K = 2, c.L = 2, c.H = 2, c.B_int = 8, c.head_width = 8;
    return c;
}

FrameInput<double> random_input(const ModelConfig& cfg, int position, Rng& rng, bool null_audio = false) {
    FrameInput<double> in;
    if (!null_audio) {
        Vector<double> a(cfg.A);
        for (Index i = 0; i < a.size(); ++i) a(i) = rng.normal();
        in.audio = a;
    }
    in.intensity = rng.uniform(0.0, 0.3);
    in.visual.resize(cfg.S, cfg.D);
    for (Index i = 0; i < in.visual.size(); ++i) in.visual.data()[i] = rng.normal();
    in.position = position;
    return in;
}

Matrix<double> row_standardize(const Matrix<double>& x, double eps) {
    Matrix<double> out(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + eps);
    }
    return out;
}

} // namespace

// Rule-by-rule enumeration of the two-frame mask, written out independently.
TEST(BuildMask, SingleFrameIsDense) {
    const FrameLayout layout(4);
    const auto m = build_mask(1, layout, {0, true, MaskVariant::kFull});
    EXPECT_TRUE(m.allowed.all());
    EXPECT_EQ(m.allowed.rows(), 6);
}

TEST(BuildMask, TwoFramesFull) {
    const FrameLayout layout(4);
    const int M = layout.tokens();
    const auto m = build_mask(2, layout, {0, true, MaskVariant::kFull});
    for (int q = 0; q < 2 * M; ++q)
        for (int k = 0; k < 2 * M; ++k) {
            const bool expect = (q >= M) || (k < M);
            EXPECT_EQ(m.allowed(q, k), expect) << q << "," << k;
        }
}

TEST(BuildMask, TwoFramesUniAtt) {
    const FrameLayout layout(4);
    const int M = layout.tokens();
    const auto m = build_mask(2, layout, {0, true, MaskVariant::kUniAtt});
    // Frame-2 audio query: no frame-2 visual keys; visual queries keep frame-2 audio.
    for (int k = M + 2; k < 2 * M; ++k) EXPECT_FALSE(m.allowed(M, k));
    EXPECT_TRUE(m.allowed(M, M));
    EXPECT_TRUE(m.allowed(M, M + 1));
    for (int q = M + 2; q < 2 * M; ++q) EXPECT_TRUE(m.allowed(q, M));
    // Nothing in frame 1 sees frame 2.
    for (int q = 0; q < M; ++q)
        for (int k = M; k < 2 * M; ++k) EXPECT_FALSE(m.allowed(q, k));
}

TEST(BuildMask, WindowKeepsSinkAndDropsOldAudio) {
    const FrameLayout layout(2);
    const int M = layout.tokens();
    const auto m = build_mask(5, layout, {3, false, MaskVariant::kFull});
    const int q = 4 * M + 2; // a visual query in frame 5
    for (int f = 0; f < 5; ++f) {
        const bool visible = f == 0 || f >= 3;
        EXPECT_EQ(m.allowed(q, f * M + 2), visible) << "frame " << f + 1;
        // Past audio keys are hidden without the audio cache; the current frame's stay.
        EXPECT_EQ(m.allowed(q, f * M), visible && f == 4) << "frame " << f + 1;
    }
}

TEST(CacheEvict, KeepsSinkAndMostRecent) {
    const ModelConfig cfg = small_config();
    SinkWindowCache<double> cache(cfg);
    for (long long f : {1, 2, 3, 4}) cache.append({f, 0, {}, {}, {}});
    cache.evict(4);
    EXPECT_EQ(cache.frame_ids(), (std::vector<long long>{1, 2, 3, 4}));
    cache.append({5, 0, {}, {}, {}});
    cache = cache_evict(cache, 4);
    EXPECT_EQ(cache.frame_ids(), (std::vector<long long>{1, 3, 4, 5}));
    cache.append({6, 0, {}, {}, {}});
    cache = cache_evict(cache, 4);
    EXPECT_EQ(cache.frame_ids(), (std::vector<long long>{1, 4, 5, 6}));
}

TEST(CacheEvict, NoEvictionBelowCapacity) {
    const ModelConfig cfg = small_config();
    SinkWindowCache<double> cache(cfg);
    for (long long f = 1; f <= 4; ++f) {
        cache.append({f, 0, {}, {}, {}});
        cache.evict(4);
        EXPECT_EQ(static_cast<long long>(cache.size()), f);
    }
}

TEST(CacheEvict, RejectsOutOfOrderAppend) {
    const ModelConfig cfg = small_config();
    SinkWindowCache<double> cache(cfg);
    EXPECT_THROW(cache.append({2, 0, {}, {}, {}}), std::invalid_argument);
    cache.append({1, 0, {}, {}, {}});
    EXPECT_THROW(cache.append({1, 0, {}, {}, {}}), std::invalid_argument);
}

TEST(Fca, ZeroWeightTransformerIsNormalizedEmbedding) {
    const ModelConfig cfg = small_config();
    Weights<double> w = random_weights(cfg);
    for (auto& b : w.fca) {
        b.wq.setZero(), b.wk.setZero(), b.wv.setZero(), b.wo.setZero();
        b.w1.setZero(), b.b1.setZero(), b.w2.setZero(), b.b2.setZero();
    }
    w.fca_ln_g.setOnes();
    w.fca_ln_b.setZero();
    Rng rng(3, "zero-weight");
    std::vector<FrameInput<double>> frames{random_input(cfg, 1, rng, true), random_input(cfg, 2, rng)};

    ad::Tape<double> tape(false);
    const auto b = bind(tape, w, cfg);
    const Matrix<double> out = fca_forward(tape, b, cfg, frames, CachePolicy::streaming(cfg)).value();
    std::vector<Matrix<double>> embedded;
    for (const auto& f : frames) embedded.push_back(embed_frame(tape, b, cfg, f).value());
    Matrix<double> expect(out.rows(), out.cols());
    expect << row_standardize(embedded[0], 1e-5), row_standardize(embedded[1], 1e-5);
    EXPECT_LT((out - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fca, FullPassIsFrameCausal) {
    const ModelConfig cfg = small_config();
    const Weights<double> w = random_weights(cfg);
    Rng rng(4, "causal");
    std::vector<FrameInput<double>> frames{random_input(cfg, 1, rng, true), random_input(cfg, 2, rng),
                                           random_input(cfg, 3, rng)};
    ad::Tape<double> tape(false);
    const auto b = bind(tape, w, cfg);
    const Matrix<double> a = fca_forward(tape, b, cfg, frames, CachePolicy::streaming(cfg)).value();
    frames[2].audio = frames[2].audio.value() * 2.0;
    frames[2].intensity += 0.5;
    const Matrix<double> c = fca_forward(tape, b, cfg, frames, CachePolicy::streaming(cfg)).value();
    const int M = cfg.frame_tokens();
    EXPECT_EQ(a.topRows(2 * M), c.topRows(2 * M));
    EXPECT_GT((a.bottomRows(M) - c.bottomRows(M)).norm(), 1e-6);
}

TEST(Fca, StreamingMatchesFullRecompute) {
    ModelConfig cfg = small_config();
    for (bool audio_cache : {true, false})
        for (MaskVariant v : {MaskVariant::kFull, MaskVariant::kUniAtt}) {
            cfg.audio_cache = audio_cache;
            cfg.mask_variant = v;
            EXPECT_TRUE(check_cache_equivalence_f64(cfg, 3 * cfg.N).pass);
            EXPECT_TRUE(check_cache_equivalence_f32(cfg, cfg.N).pass);
        }
}

TEST(Fca, StreamingStepGuards) {
    const ModelConfig cfg = small_config();
    const Weights<double> w = random_weights(cfg);
    SinkWindowCache<double> cache(cfg);
    const Matrix<double> x = Matrix<double>::Zero(cfg.S, cfg.D);
    EXPECT_THROW(fca_step(w, cfg, std::optional<Vector<double>>{}, 0.0, x, cache, 2), std::invalid_argument);
    fca_step(w, cfg, std::optional<Vector<double>>{}, 0.0, x, cache, 1);
    EXPECT_THROW(fca_step(w, cfg, std::optional<Vector<double>>{}, 0.0, x, cache, 3), std::invalid_argument);
    ModelConfig other = cfg;
    other.N = 4;
    EXPECT_THROW(fca_step(w, other, std::optional<Vector<double>>{}, 0.0, x, cache, 2), std::invalid_argument);
}

TEST(Fca, SinkRetention) {
    const ModelConfig cfg = small_config();
    EXPECT_TRUE(check_sink_retention(cfg, 10 * cfg.N).pass);
}

TEST(Fca, AudioRowsDroppedWithoutAudioCache) {
    ModelConfig cfg = small_config();
    cfg.audio_cache = false;
    const Weights<double> w = random_weights(cfg);
    SinkWindowCache<double> cache(cfg);
    Rng rng(5, "audio-drop");
    Matrix<double> x = random_input(cfg, 1, rng).visual;
    fca_step(w, cfg, std::optional<Vector<double>>{}, 0.0, x, cache, 1);
    Vector<double> a = Vector<double>::Ones(cfg.A);
    fca_step(w, cfg, std::optional<Vector<double>>(a), 0.1, x, cache, 2);
    for (const auto& f : cache.frames())
        for (TokenKind k : f.kinds) EXPECT_NE(k, TokenKind::kAudio);
}

TEST(AdaLN, IdentityModulationReturnsAnchor) {
    const ModelConfig cfg = small_config();
    Weights<double> w = random_weights(cfg);
    w.scale_w.setZero();
    w.scale_b.setOnes();
    w.shift_w.setZero();
    w.shift_b.setZero();
    Rng rng(6, "adaln");
    const Matrix<double> h1 = random_input(cfg, 1, rng).visual;
    const Matrix<double> ht = random_input(cfg, 1, rng).visual;
    AdaLNSink<double> sink;
    sink.set_anchor(h1);
    EXPECT_LT((sink.apply(w, cfg, ht) - row_standardize(h1, 1e-6)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(sink.set_anchor(h1), std::logic_error);
}

TEST(AdaLN, ZeroScaleIgnoresAnchor) {
    const ModelConfig cfg = small_config();
    Weights<double> w = random_weights(cfg);
    w.scale_w.setZero();
    w.scale_b.setZero();
    Rng rng(7, "adaln");
    const Matrix<double> ht = random_input(cfg, 1, rng).visual;
    AdaLNSink<double> a, b;
    a.set_anchor(random_input(cfg, 1, rng).visual);
    b.set_anchor(random_input(cfg, 1, rng).visual);
    const Matrix<double> expect = (ht * w.shift_w).rowwise() + w.shift_b.row(0);
    EXPECT_LT((a.apply(w, cfg, ht) - expect).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((b.apply(w, cfg, ht) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AdaLN, ConstantTokensStayFinite) {
    const ModelConfig cfg = small_config();
    const Weights<double> w = random_weights(cfg);
    AdaLNSink<double> sink;
    sink.set_anchor(Matrix<double>::Constant(cfg.S, cfg.D, 3.0));
    EXPECT_TRUE(sink.anchor().allFinite());
    EXPECT_TRUE(sink.apply(w, cfg, Matrix<double>::Ones(cfg.S, cfg.D)).allFinite());
}
