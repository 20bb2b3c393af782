// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_ATTENTION_HPP
#define SINKSTREAM_ATTENTION_HPP

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sinkstream/autodiff.hpp"
#include "sinkstream/config.hpp"
#include "sinkstream/parameters.hpp"
#include "sinkstream/posenc.hpp"
#include "sinkstream/types.hpp"

namespace sinkstream {

enum class TokenKind : std::uint8_t { kAudio = 0, kIntensity = 1, kVisual = 2 };

/// Per-frame token order: audio, intensity, then S visual tokens.
struct FrameLayout {
    int visual_tokens = 0;

    explicit FrameLayout(int S) : visual_tokens(S) {}
    explicit FrameLayout(const ModelConfig& cfg) : visual_tokens(cfg.S) {}

    static constexpr int condition_tokens() { return ModelConfig::condition_tokens(); }
    [[nodiscard]] int tokens() const { return condition_tokens() + visual_tokens; }
    [[nodiscard]] TokenKind kind(int i) const {
        if (i == 0) return TokenKind::kAudio;
        if (i == 1) return TokenKind::kIntensity;
        return TokenKind::kVisual;
    }
    [[nodiscard]] std::vector<TokenKind> kinds() const {
        std::vector<TokenKind> out;
        for (int i = 0; i < tokens(); ++i) out.push_back(kind(i));
        return out;
    }
};

/// Which past tokens a frame may see.
struct CachePolicy {
    int window = 0; // frames visible including the sink and the current frame; 0 = unbounded
    bool audio_cache = true;
    MaskVariant variant = MaskVariant::kFull;

    static CachePolicy streaming(const ModelConfig& cfg) { return {cfg.N, cfg.audio_cache, cfg.mask_variant}; }
    static CachePolicy unbounded(const ModelConfig& cfg) { return {0, cfg.audio_cache, cfg.mask_variant}; }
};

/// Single rule shared by the full-sequence mask and the streaming step.
/// Frames are 1-based; frame 1 is the sink.
inline bool attention_allowed(const CachePolicy& p, TokenKind q, long long q_frame, TokenKind k, long long k_frame) {
    if (k_frame > q_frame) return false;
    if (k_frame < q_frame) {
        if (p.window > 0 && k_frame != 1 && k_frame < q_frame - p.window + 2) return false;
        if (k == TokenKind::kAudio && !p.audio_cache) return false;
    }
    if (p.variant == MaskVariant::kUniAtt && q == TokenKind::kAudio && k == TokenKind::kVisual) return false;
    return true;
}

struct CausalMask {
    BoolMask allowed;
    MaskVariant variant = MaskVariant::kFull;
};

/// Mask over T frames laid out back to back.
inline CausalMask build_mask(int T, const FrameLayout& layout, const CachePolicy& policy) {
    if (T < 1) throw std::invalid_argument("build_mask needs T >= 1");
    const int M = layout.tokens();
    CausalMask mask{BoolMask(T * M, T * M), policy.variant};
    for (int qf = 0; qf < T; ++qf)
        for (int qi = 0; qi < M; ++qi)
            for (int kf = 0; kf < T; ++kf)
                for (int ki = 0; ki < M; ++ki)
                    mask.allowed(qf * M + qi, kf * M + ki) =
                        (qf == kf && qi == ki) ||
                        attention_allowed(policy, layout.kind(qi), qf + 1, layout.kind(ki), kf + 1);
    return mask;
}

/// Keys and values of one cached frame at every layer.
template <typename Scalar>
struct CachedFrame {
    long long frame = 0;
    int position = 0;
    std::vector<TokenKind> kinds;
    std::vector<Matrix<Scalar>> keys;   // per layer, rows match kinds
    std::vector<Matrix<Scalar>> values; // per layer
};

/// Sink-retaining sliding-window KV cache for one generation session.
template <typename Scalar>
class SinkWindowCache {
public:
    SinkWindowCache() = default;
    explicit SinkWindowCache(const ModelConfig& cfg)
        : config_hash_(config_hash(cfg)), window_(cfg.N), layers_(cfg.L), audio_cache_(cfg.audio_cache) {}

    [[nodiscard]] std::uint64_t config_hash_value() const { return config_hash_; }
    [[nodiscard]] int window() const { return window_; }
    [[nodiscard]] int layers() const { return layers_; }
    [[nodiscard]] bool audio_cache() const { return audio_cache_; }
    [[nodiscard]] std::size_t size() const { return frames_.size(); }
    [[nodiscard]] bool empty() const { return frames_.empty(); }
    [[nodiscard]] const std::deque<CachedFrame<Scalar>>& frames() const { return frames_; }
    [[nodiscard]] std::deque<CachedFrame<Scalar>>& frames() { return frames_; }

    [[nodiscard]] bool has_sink() const { return !frames_.empty() && frames_.front().frame == 1; }

    [[nodiscard]] std::vector<long long> frame_ids() const {
        std::vector<long long> ids;
        for (const auto& f : frames_) ids.push_back(f.frame);
        return ids;
    }

    /// Cached key/value tokens (per layer).
    [[nodiscard]] std::size_t tokens() const {
        std::size_t n = 0;
        for (const auto& f : frames_) n += f.kinds.size();
        return n;
    }

    /// Bytes held by key/value payloads across all layers.
    [[nodiscard]] std::size_t bytes() const {
        std::size_t n = 0;
        for (const auto& f : frames_)
            for (std::size_t l = 0; l < f.keys.size(); ++l)
                n += static_cast<std::size_t>(f.keys[l].size() + f.values[l].size()) * sizeof(Scalar);
        return n;
    }

    void append(CachedFrame<Scalar> frame) {
        if (!frames_.empty() && frame.frame <= frames_.back().frame)
            throw std::invalid_argument("cache frames must be appended in increasing order");
        if (frames_.empty() && frame.frame != 1) throw std::invalid_argument("first cached frame must be the sink");
        frames_.push_back(std::move(frame));
    }

    /// Drops the oldest non-sink frame while more than `N` frames are held.
    void evict(int N) {
        while (static_cast<int>(frames_.size()) > N && frames_.size() > 1) frames_.erase(frames_.begin() + 1);
    }

private:
    std::uint64_t config_hash_ = 0;
    int window_ = 0;
    int layers_ = 0;
    bool audio_cache_ = true;
    std::deque<CachedFrame<Scalar>> frames_;
};

/// Functional form of eviction.
template <typename Scalar>
SinkWindowCache<Scalar> cache_evict(SinkWindowCache<Scalar> cache, int N) {
    cache.evict(N);
    return cache;
}

/// One frame's inputs to the frame-causal transformer.
template <typename Scalar>
struct FrameInput {
    std::optional<Vector<Scalar>> audio; // empty: learned null audio token
    double intensity = 0;
    Matrix<Scalar> visual; // S x D
    int position = 1;      // 1-based table row
};

namespace detail {

template <typename Scalar>
ad::Var<Scalar> row_of(ad::Var<Scalar> m, Index r) {
    return ad::rows(m, r, 1);
}

} // namespace detail

/// Token embeddings for one frame, (M + S) x D.
template <typename Scalar>
ad::Var<Scalar> embed_frame(ad::Tape<Scalar>& tape, const BoundWeights<Scalar>& w, const ModelConfig& cfg,
                            const FrameInput<Scalar>& in) {
    using ad::operator+;
    using ad::operator*;
    if (in.visual.rows() != cfg.S || in.visual.cols() != cfg.D)
        throw std::invalid_argument("visual input shape does not match S x D");
    if (in.position < 1 || in.position > cfg.table_size())
        throw std::out_of_range("position index outside the cyclic table");
    auto pos = ad::gather_rows(w.pos_table, {static_cast<Index>(in.position - 1)});

    ad::Var<Scalar> audio_tok;
    if (in.audio) {
        if (in.audio->size() != cfg.A) throw std::invalid_argument("audio width does not match A");
        auto a = tape.constant(in.audio->transpose());
        audio_tok = a * w.audio_in_w + w.audio_in_b;
    } else {
        audio_tok = w.null_audio;
    }
    audio_tok = audio_tok + detail::row_of(w.type_emb, 0) + pos;

    const int bin = intensity_bin(in.intensity, cfg.intensity_bin_width, cfg.B_int);
    auto int_tok = ad::gather_rows(w.int_table, {static_cast<Index>(bin)}) * w.int_in_w + w.int_in_b +
                   detail::row_of(w.type_emb, 1) + pos;

    auto vis = tape.constant(in.visual) * w.vis_in_w + w.vis_in_b + w.vis_slot + detail::row_of(w.type_emb, 2) + pos;
    return ad::concat_rows<Scalar>({audio_tok, int_tok, vis});
}

/// Multi-head attention over precomputed projections; returns the pre-Wo mix.
template <typename Scalar>
ad::Var<Scalar> multi_head(ad::Var<Scalar> q, ad::Var<Scalar> k, ad::Var<Scalar> v, const BoolMask& allowed,
                           int heads) {
    using ad::operator*;
    const Index dh = q.cols() / heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    std::vector<ad::Var<Scalar>> outs;
    for (int h = 0; h < heads; ++h) {
        auto qh = ad::cols(q, h * dh, dh);
        auto kh = ad::cols(k, h * dh, dh);
        auto vh = ad::cols(v, h * dh, dh);
        auto p = ad::masked_softmax(scale * ad::matmul_nt(qh, kh), allowed);
        outs.push_back(p * vh);
    }
    return heads == 1 ? outs.front() : ad::concat_cols(outs);
}

template <typename Scalar>
ad::Var<Scalar> feed_forward(const BlockParams<ad::Var<Scalar>>& b, ad::Var<Scalar> x) {
    using ad::operator+;
    using ad::operator*;
    auto h = ad::layer_norm(x, b.ln2_g, b.ln2_b);
    return x + (ad::silu(h * b.w1 + b.b1) * b.w2 + b.b2);
}

/// Full-sequence frame-causal forward under a mask; returns final-norm outputs
/// for every token of every frame.
template <typename Scalar>
ad::Var<Scalar> fca_forward(ad::Tape<Scalar>& tape, const BoundWeights<Scalar>& w, const ModelConfig& cfg,
                            const std::vector<FrameInput<Scalar>>& frames, const CachePolicy& policy) {
    using ad::operator+;
    using ad::operator*;
    const FrameLayout layout(cfg);
    std::vector<ad::Var<Scalar>> parts;
    for (const auto& f : frames) parts.push_back(embed_frame(tape, w, cfg, f));
    auto x = ad::concat_rows(parts);
    const CausalMask mask = build_mask(static_cast<int>(frames.size()), layout, policy);
    for (const auto& b : w.fca) {
        auto xn = ad::layer_norm(x, b.ln1_g, b.ln1_b);
        auto mixed = multi_head(xn * b.wq, xn * b.wk, xn * b.wv, mask.allowed, cfg.H);
        x = x + mixed * b.wo;
        x = feed_forward(b, x);
    }
    return ad::layer_norm(x, w.fca_ln_g, w.fca_ln_b);
}

template <typename Scalar>
struct FcaStepOutput {
    Matrix<Scalar> h_cond; // M x D
    Matrix<Scalar> h;      // S x D
    int position = 0;
    std::size_t attended_tokens = 0; // keys seen by a visual query at the last layer
};

/// Streaming frame-causal step for frame `t`: appends this frame to the cache,
/// evicts, then attends over everything the cache still holds.
///
/// `tape` must be non-recording; `w` is the weights bound on it.
template <typename Scalar>
FcaStepOutput<Scalar> fca_step(ad::Tape<Scalar>& tape, const BoundWeights<Scalar>& w, const ModelConfig& cfg,
                               const std::optional<Vector<Scalar>>& audio, double intensity,
                               const Matrix<Scalar>& prev_visual, SinkWindowCache<Scalar>& cache, long long t) {
    using ad::operator+;
    using ad::operator*;
    if (cache.config_hash_value() != config_hash(cfg)) throw std::invalid_argument("cache built for another config");
    if (t < 1) throw std::invalid_argument("frame index must be >= 1");
    if (t == 1 && !cache.empty()) throw std::invalid_argument("frame 1 requires an empty cache");
    if (t > 1 && !cache.has_sink()) throw std::invalid_argument("cache is missing the sink frame");
    if (!cache.empty() && cache.frames().back().frame != t - 1)
        throw std::invalid_argument("frame " + std::to_string(t) + " does not follow the cached frames");

    const FrameLayout layout(cfg);
    const CachePolicy policy = CachePolicy::streaming(cfg);
    const int position = temporal_index(t, cfg.N);

    FrameInput<Scalar> in{audio, intensity, prev_visual, position};
    auto x = embed_frame(tape, w, cfg, in);

    CachedFrame<Scalar> entry;
    entry.frame = t;
    entry.position = position;
    entry.kinds = layout.kinds();
    cache.append(std::move(entry));
    cache.evict(cfg.N);
    auto& current = cache.frames().back();

    // Key layout: cached frames in order, current frame last.
    std::vector<TokenKind> key_kinds;
    std::vector<long long> key_frames;
    for (const auto& f : cache.frames()) {
        for (auto k : f.kinds) {
            key_kinds.push_back(k);
            key_frames.push_back(f.frame);
        }
    }
    const int M = layout.tokens();
    BoolMask allowed(M, static_cast<Index>(key_kinds.size()));
    for (int qi = 0; qi < M; ++qi)
        for (std::size_t j = 0; j < key_kinds.size(); ++j)
            allowed(qi, static_cast<Index>(j)) = attention_allowed(policy, layout.kind(qi), t, key_kinds[j], key_frames[j]);

    for (std::size_t l = 0; l < w.fca.size(); ++l) {
        const auto& b = w.fca[l];
        auto xn = ad::layer_norm(x, b.ln1_g, b.ln1_b);
        auto q = xn * b.wq;
        auto k_cur = xn * b.wk;
        auto v_cur = xn * b.wv;
        current.keys.push_back(k_cur.value());
        current.values.push_back(v_cur.value());
        std::vector<ad::Var<Scalar>> ks, vs;
        for (const auto& f : cache.frames()) {
            if (&f == &current) break;
            ks.push_back(tape.constant(f.keys[l]));
            vs.push_back(tape.constant(f.values[l]));
        }
        ks.push_back(k_cur);
        vs.push_back(v_cur);
        auto mixed = multi_head(q, ad::concat_rows(ks), ad::concat_rows(vs), allowed, cfg.H);
        x = x + mixed * b.wo;
        x = feed_forward(b, x);
    }
    auto out = ad::layer_norm(x, w.fca_ln_g, w.fca_ln_b).value();

    if (!cfg.audio_cache) {
        // Past audio keys are never visible; keep only the other rows.
        std::vector<Index> keep;
        std::vector<TokenKind> kept_kinds;
        for (int i = 0; i < M; ++i)
            if (current.kinds[i] != TokenKind::kAudio) {
                keep.push_back(i);
                kept_kinds.push_back(current.kinds[i]);
            }
        for (std::size_t l = 0; l < current.keys.size(); ++l) {
            current.keys[l] = current.keys[l](keep, Eigen::all).eval();
            current.values[l] = current.values[l](keep, Eigen::all).eval();
        }
        current.kinds = kept_kinds;
    }

    FcaStepOutput<Scalar> result;
    result.h_cond = out.topRows(FrameLayout::condition_tokens());
    result.h = out.bottomRows(cfg.S);
    result.position = position;
    result.attended_tokens = static_cast<std::size_t>(allowed.row(M - 1).count());
    return result;
}

template <typename Scalar>
FcaStepOutput<Scalar> fca_step(const Weights<Scalar>& weights, const ModelConfig& cfg,
                               const std::optional<Vector<Scalar>>& audio, double intensity,
                               const Matrix<Scalar>& prev_visual, SinkWindowCache<Scalar>& cache, long long t) {
    ad::Tape<Scalar> tape(false);
    const auto w = bind(tape, weights, cfg);
    return fca_step(tape, w, cfg, audio, intensity, prev_visual, cache, t);
}

/// Anchored representation: H'_t = anchor * ScaleProj(H_t) + ShiftProj(H_t), tokenwise.
template <typename Scalar>
ad::Var<Scalar> adaln_modulate(const BoundWeights<Scalar>& w, ad::Var<Scalar> anchor, ad::Var<Scalar> h) {
    using ad::operator+;
    using ad::operator*;
    return ad::cwise_product(anchor, h * w.scale_w + w.scale_b) + (h * w.shift_w + w.shift_b);
}

constexpr double kAnchorEps = 1e-6;

/// adaLN sink: holds the normalized reference representation H'_1.
template <typename Scalar>
class AdaLNSink {
public:
    [[nodiscard]] bool initialized() const { return anchor_.has_value(); }

    /// Normalizes each token of H_1 over D (zero mean, unit variance). Only once.
    void set_anchor(const Matrix<Scalar>& h1) {
        if (anchor_) throw std::logic_error("adaLN anchor already set");
        ad::Tape<Scalar> tape(false);
        anchor_ = ad::normalize_rows(tape.constant(h1), static_cast<Scalar>(kAnchorEps)).value();
    }

    [[nodiscard]] const Matrix<Scalar>& anchor() const {
        if (!anchor_) throw std::logic_error("adaLN anchor not initialized");
        return *anchor_;
    }

    [[nodiscard]] Matrix<Scalar> apply(const Weights<Scalar>& weights, const ModelConfig& cfg,
                                       const Matrix<Scalar>& h) const {
        if (!anchor_) throw std::logic_error("adaLN anchor not initialized");
        if (h.rows() != anchor_->rows() || h.cols() != anchor_->cols())
            throw std::invalid_argument("adaLN input shape does not match the anchor");
        ad::Tape<Scalar> tape(false);
        const auto w = bind(tape, weights, cfg);
        return adaln_modulate(w, tape.constant(*anchor_), tape.constant(h)).value();
    }

private:
    std::optional<Matrix<Scalar>> anchor_;
};

} // namespace sinkstream

#endif // SINKSTREAM_ATTENTION_HPP
