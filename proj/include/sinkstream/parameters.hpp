// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_PARAMETERS_HPP
#define SINKSTREAM_PARAMETERS_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sinkstream/autodiff.hpp"
#include "sinkstream/config.hpp"
#include "sinkstream/posenc.hpp"
#include "sinkstream/rng.hpp"
#include "sinkstream/types.hpp"

namespace sinkstream {

/// Pre-norm transformer block. `T` is a storage matrix or a tape Var.
template <typename T>
struct BlockParams {
    T ln1_g, ln1_b;
    T wq, wk, wv, wo;
    T ln2_g, ln2_b;
    T w1, b1, w2, b2;

    template <typename Self, typename F>
    static void visit(Self& self, const std::string& prefix, F&& f) {
        f(prefix + "ln1_g", self.ln1_g);
        f(prefix + "ln1_b", self.ln1_b);
        f(prefix + "wq", self.wq);
        f(prefix + "wk", self.wk);
        f(prefix + "wv", self.wv);
        f(prefix + "wo", self.wo);
        f(prefix + "ln2_g", self.ln2_g);
        f(prefix + "ln2_b", self.ln2_b);
        f(prefix + "w1", self.w1);
        f(prefix + "b1", self.b1);
        f(prefix + "w2", self.w2);
        f(prefix + "b2", self.b2);
    }
};

/// Every learned (and fixed-table) tensor of the model, grouped by component.
template <typename T>
struct ModelParams {
    // frame-causal transformer inputs
    T vis_in_w, vis_in_b, vis_slot;
    T audio_in_w, audio_in_b, null_audio;
    T int_in_w, int_in_b;
    T type_emb;
    T pos_table; // (2N-1) x D cyclic temporal table
    T int_table; // B_int x D intensity table
    std::vector<BlockParams<T>> fca;
    T fca_ln_g, fca_ln_b;
    // adaLN sink
    T scale_w, scale_b, shift_w, shift_b;
    // masked autoregression
    T tok_in_w, tok_in_b, mask_token, mar_slot;
    std::vector<BlockParams<T>> mar;
    // diffusion head
    T head_w1, head_b1, head_tw, head_w2, head_b2, head_w3, head_b3;

    /// Calls f(name, tensor) for every tensor in a fixed order.
    template <typename Self, typename F>
    static void visit(Self& self, F&& f) {
        f("fca.vis_in_w", self.vis_in_w);
        f("fca.vis_in_b", self.vis_in_b);
        f("fca.vis_slot", self.vis_slot);
        f("fca.audio_in_w", self.audio_in_w);
        f("fca.audio_in_b", self.audio_in_b);
        f("fca.null_audio", self.null_audio);
        f("fca.int_in_w", self.int_in_w);
        f("fca.int_in_b", self.int_in_b);
        f("fca.type_emb", self.type_emb);
        f("posenc.pos_table", self.pos_table);
        f("posenc.int_table", self.int_table);
        for (std::size_t i = 0; i < self.fca.size(); ++i)
            BlockParams<T>::visit(self.fca[i], "fca.block" + std::to_string(i) + ".", f);
        f("fca.ln_g", self.fca_ln_g);
        f("fca.ln_b", self.fca_ln_b);
        f("adaln.scale_w", self.scale_w);
        f("adaln.scale_b", self.scale_b);
        f("adaln.shift_w", self.shift_w);
        f("adaln.shift_b", self.shift_b);
        f("mar.tok_in_w", self.tok_in_w);
        f("mar.tok_in_b", self.tok_in_b);
        f("mar.mask_token", self.mask_token);
        f("mar.slot", self.mar_slot);
        for (std::size_t i = 0; i < self.mar.size(); ++i)
            BlockParams<T>::visit(self.mar[i], "mar.block" + std::to_string(i) + ".", f);
        f("head.w1", self.head_w1);
        f("head.b1", self.head_b1);
        f("head.tw", self.head_tw);
        f("head.w2", self.head_w2);
        f("head.b2", self.head_b2);
        f("head.w3", self.head_w3);
        f("head.b3", self.head_b3);
    }
    template <typename F>
    void for_each(F&& f) {
        visit(*this, std::forward<F>(f));
    }
    template <typename F>
    void for_each(F&& f) const {
        visit(*this, std::forward<F>(f));
    }
};

/// Whether the optimizer updates a tensor. The position and intensity tables
/// are fixed sinusoids unless the config asks to tune the position table.
inline bool is_trainable(const std::string& name, const ModelConfig& cfg) {
    if (name == "posenc.int_table") return false;
    if (name == "posenc.pos_table") return cfg.tune_position_table;
    return true;
}

template <typename Scalar>
using Weights = ModelParams<Matrix<Scalar>>;

template <typename Scalar>
using BoundWeights = ModelParams<ad::Var<Scalar>>;

namespace detail {

template <typename Scalar>
Matrix<Scalar> gaussian(Index r, Index c, double stddev, Rng& rng) {
    Matrix<Scalar> m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = static_cast<Scalar>(stddev * rng.normal());
    return m;
}

template <typename Scalar>
BlockParams<Matrix<Scalar>> init_block(int D, int hidden, int layers, Rng rng) {
    using M = Matrix<Scalar>;
    const double s = 1.0 / std::sqrt(static_cast<double>(D));
    const double out_s = s / std::sqrt(2.0 * layers);
    BlockParams<M> b;
    b.ln1_g = M::Ones(1, D);
    b.ln1_b = M::Zero(1, D);
    b.wq = gaussian<Scalar>(D, D, s, rng);
    b.wk = gaussian<Scalar>(D, D, s, rng);
    b.wv = gaussian<Scalar>(D, D, s, rng);
    b.wo = gaussian<Scalar>(D, D, out_s, rng);
    b.ln2_g = M::Ones(1, D);
    b.ln2_b = M::Zero(1, D);
    b.w1 = gaussian<Scalar>(D, hidden, s, rng);
    b.b1 = M::Zero(1, hidden);
    b.w2 = gaussian<Scalar>(hidden, D, out_s / std::sqrt(static_cast<double>(hidden) / D), rng);
    b.b2 = M::Zero(1, D);
    return b;
}

} // namespace detail

/// Deterministic initialization from the config seed.
template <typename Scalar>
Weights<Scalar> init_weights(const ModelConfig& cfg) {
    require_valid(cfg);
    using M = Matrix<Scalar>;
    const Rng root(cfg.seed, "init");
    const int D = cfg.D;
    const double s = 1.0 / std::sqrt(static_cast<double>(D));
    auto g = [&](const char* label, Index r, Index c, double stddev) {
        Rng rng = root.child(label);
        return detail::gaussian<Scalar>(r, c, stddev, rng);
    };

    Weights<Scalar> w;
    w.vis_in_w = g("vis_in_w", D, D, s);
    w.vis_in_b = M::Zero(1, D);
    w.vis_slot = g("vis_slot", cfg.S, D, 0.1);
    w.audio_in_w = g("audio_in_w", cfg.A, D, 1.0 / std::sqrt(static_cast<double>(cfg.A)));
    w.audio_in_b = M::Zero(1, D);
    w.null_audio = g("null_audio", 1, D, 0.1);
    w.int_in_w = g("int_in_w", D, D, s);
    w.int_in_b = M::Zero(1, D);
    w.type_emb = g("type_emb", 3, D, 0.1);
    w.pos_table = sinusoid_table<Scalar>(cfg.table_size(), D);
    w.int_table = sinusoid_table<Scalar>(cfg.B_int, D);
    for (int l = 0; l < cfg.L; ++l)
        w.fca.push_back(detail::init_block<Scalar>(D, cfg.mlp_ratio * D, cfg.L, root.child("fca").child(l)));
    w.fca_ln_g = M::Ones(1, D);
    w.fca_ln_b = M::Zero(1, D);

    // Scale starts at exactly 1 so the sink anchor passes through at init.
    w.scale_w = M::Zero(D, D);
    w.scale_b = M::Ones(1, D);
    w.shift_w = g("shift_w", D, D, 0.5 * s);
    w.shift_b = M::Zero(1, D);

    w.tok_in_w = g("tok_in_w", D, D, s);
    w.tok_in_b = M::Zero(1, D);
    w.mask_token = g("mask_token", 1, D, 0.1);
    w.mar_slot = g("mar_slot", cfg.S, D, 0.1);
    for (int l = 0; l < cfg.mar_layers; ++l)
        w.mar.push_back(
            detail::init_block<Scalar>(D, cfg.mlp_ratio * D, cfg.mar_layers, root.child("mar").child(l)));

    const int W = cfg.head_width;
    w.head_w1 = g("head_w1", 2 * D, W, 1.0 / std::sqrt(2.0 * D));
    w.head_b1 = M::Zero(1, W);
    w.head_tw = g("head_tw", W, W, 1.0 / std::sqrt(static_cast<double>(W)));
    w.head_w2 = g("head_w2", W, W, 1.0 / std::sqrt(static_cast<double>(W)));
    w.head_b2 = M::Zero(1, W);
    w.head_w3 = g("head_w3", W, D, 0.1 / std::sqrt(static_cast<double>(W)));
    w.head_b3 = M::Zero(1, D);
    return w;
}

enum class LeafMode {
    kConstant,  // inference: nothing receives a gradient
    kTrainable, // training: tensors the optimizer updates
    kAll,       // gradient checks: every tensor, fixed tables included
};

/// Puts every tensor on the tape as a gradient leaf or a constant.
template <typename Scalar>
BoundWeights<Scalar> bind(ad::Tape<Scalar>& tape, const Weights<Scalar>& w, const ModelConfig& cfg,
                          LeafMode mode = LeafMode::kConstant) {
    BoundWeights<Scalar> b;
    b.fca.resize(w.fca.size());
    b.mar.resize(w.mar.size());
    std::vector<ad::Var<Scalar>*> slots;
    b.for_each([&](const std::string&, ad::Var<Scalar>& v) { slots.push_back(&v); });
    std::size_t i = 0;
    w.for_each([&](const std::string& name, const Matrix<Scalar>& m) {
        const bool leaf = mode == LeafMode::kAll || (mode == LeafMode::kTrainable && is_trainable(name, cfg));
        *slots[i++] = leaf ? tape.variable(m) : tape.constant(m);
    });
    return b;
}

/// Same-shaped zeros, e.g. for gradient or optimizer state.
template <typename Scalar>
Weights<Scalar> zeros_like(const Weights<Scalar>& w) {
    Weights<Scalar> z = w;
    z.for_each([](const std::string&, Matrix<Scalar>& m) { m.setZero(); });
    return z;
}

template <typename To, typename From>
Weights<To> cast_weights(const Weights<From>& w) {
    Weights<To> out;
    out.fca.resize(w.fca.size());
    out.mar.resize(w.mar.size());
    std::vector<Matrix<To>*> slots;
    out.for_each([&](const std::string&, Matrix<To>& m) { slots.push_back(&m); });
    std::size_t i = 0;
    w.for_each([&](const std::string&, const Matrix<From>& m) { *slots[i++] = m.template cast<To>(); });
    return out;
}

template <typename Scalar>
std::size_t parameter_count(const Weights<Scalar>& w) {
    std::size_t n = 0;
    w.for_each([&](const std::string&, const Matrix<Scalar>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

} // namespace sinkstream

#endif // SINKSTREAM_PARAMETERS_HPP
