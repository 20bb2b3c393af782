// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_MAR_HPP
#define SINKSTREAM_MAR_HPP

#include <algorithm>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sinkstream/attention.hpp"
#include "sinkstream/autodiff.hpp"
#include "sinkstream/parameters.hpp"
#include "sinkstream/rng.hpp"
#include "sinkstream/types.hpp"

namespace sinkstream {

/// K disjoint groups of 0-based spatial slots, in generation order.
struct GroupPlan {
    std::vector<std::vector<int>> groups;

    [[nodiscard]] int size() const { return static_cast<int>(groups.size()); }
    [[nodiscard]] const std::vector<int>& group(int k) const { return groups.at(static_cast<std::size_t>(k)); }
};

/// Uniformly random balanced partition of S slots into K groups with a random order.
GroupPlan make_group_plan(int S, int K, Rng& rng);

/// Checks disjointness, coverage of [0, S) and balance; returns an empty
/// string when the plan is valid, otherwise a description of the first defect.
std::string check_group_plan(const GroupPlan& plan, int S);

/// Bidirectional masked-AR network over S slots.
///
/// Known slots carry their token projection, the rest carry the mask token;
/// slot embeddings and the anchored representation are added per slot. The
/// condition outputs act as a read-only prefix: slots attend to them, they
/// are never updated. Returns the residual stream (S x D), i.e. z per slot.
template <typename Scalar>
ad::Var<Scalar> mar_forward(ad::Tape<Scalar>& tape, const BoundWeights<Scalar>& w, const ModelConfig& cfg,
                            ad::Var<Scalar> h_cond, ad::Var<Scalar> h_anchor, const Matrix<Scalar>& tokens,
                            const std::vector<bool>& known) {
    using ad::operator+;
    using ad::operator*;
    if (static_cast<int>(known.size()) != cfg.S || tokens.rows() != cfg.S || tokens.cols() != cfg.D)
        throw std::invalid_argument("masked-AR inputs do not match S x D");
    auto proj = tape.constant(tokens) * w.tok_in_w + w.tok_in_b;
    auto stacked = ad::concat_rows<Scalar>({proj, w.mask_token});
    std::vector<Index> pick(static_cast<std::size_t>(cfg.S));
    for (int s = 0; s < cfg.S; ++s) pick[static_cast<std::size_t>(s)] = known[static_cast<std::size_t>(s)] ? s : cfg.S;
    auto x = ad::gather_rows(stacked, std::move(pick)) + w.mar_slot + h_anchor;

    const BoolMask all = BoolMask::Constant(cfg.S, cfg.S + h_cond.rows(), true);
    for (const auto& b : w.mar) {
        auto xn = ad::layer_norm(x, b.ln1_g, b.ln1_b);
        auto pn = ad::layer_norm(h_cond, b.ln1_g, b.ln1_b);
        auto keys = ad::concat_rows<Scalar>({pn * b.wk, xn * b.wk});
        auto values = ad::concat_rows<Scalar>({pn * b.wv, xn * b.wv});
        auto mixed = multi_head(xn * b.wq, keys, values, all, cfg.H);
        x = x + mixed * b.wo;
        x = feed_forward(b, x);
    }
    return x;
}

/// Slot -> token for slots generated so far.
template <typename Scalar>
using GeneratedTokens = std::map<int, RowVector<Scalar>>;

/// Conditioning z for the slots of group k (0-based), |group k| x D rows in
/// group order. Every slot of groups < k must already be generated.
template <typename Scalar>
Matrix<Scalar> mar_condition(ad::Tape<Scalar>& tape, const BoundWeights<Scalar>& w, const ModelConfig& cfg,
                             const Matrix<Scalar>& h_cond, const Matrix<Scalar>& h_anchor,
                             const GeneratedTokens<Scalar>& generated, const GroupPlan& plan, int k) {
    if (k < 0 || k >= plan.size()) throw std::out_of_range("group index outside the plan");
    Matrix<Scalar> tokens = Matrix<Scalar>::Zero(cfg.S, cfg.D);
    std::vector<bool> known(static_cast<std::size_t>(cfg.S), false);
    for (int g = 0; g < k; ++g) {
        for (int slot : plan.group(g)) {
            auto it = generated.find(slot);
            if (it == generated.end())
                throw std::invalid_argument("slot " + std::to_string(slot) + " of group " + std::to_string(g) +
                                            " has not been generated");
            tokens.row(slot) = it->second;
            known[static_cast<std::size_t>(slot)] = true;
        }
    }
    auto z = mar_forward(tape, w, cfg, tape.constant(h_cond), tape.constant(h_anchor), tokens, known).value();
    const auto& slots = plan.group(k);
    Matrix<Scalar> out(static_cast<Index>(slots.size()), cfg.D);
    for (std::size_t i = 0; i < slots.size(); ++i) out.row(static_cast<Index>(i)) = z.row(slots[i]);
    return out;
}

template <typename Scalar>
Matrix<Scalar> mar_condition(const Weights<Scalar>& weights, const ModelConfig& cfg, const Matrix<Scalar>& h_cond,
                             const Matrix<Scalar>& h_anchor, const GeneratedTokens<Scalar>& generated,
                             const GroupPlan& plan, int k) {
    ad::Tape<Scalar> tape(false);
    const auto w = bind(tape, weights, cfg);
    return mar_condition(tape, w, cfg, h_cond, h_anchor, generated, plan, k);
}

/// Maps the conditioning rows of group k to sampled tokens (same shape).
template <typename Scalar>
using GroupSampler = std::function<Matrix<Scalar>(const Matrix<Scalar>& z, int k)>;

/// Generates all S tokens group by group; returns S x D.
template <typename Scalar>
Matrix<Scalar> mar_generate(ad::Tape<Scalar>& tape, const BoundWeights<Scalar>& w, const ModelConfig& cfg,
                            const Matrix<Scalar>& h_cond, const Matrix<Scalar>& h_anchor, const GroupPlan& plan,
                            const GroupSampler<Scalar>& sampler) {
    GeneratedTokens<Scalar> generated;
    for (int k = 0; k < plan.size(); ++k) {
        const Matrix<Scalar> z = mar_condition(tape, w, cfg, h_cond, h_anchor, generated, plan, k);
        const Matrix<Scalar> x = sampler(z, k);
        if (x.rows() != z.rows() || x.cols() != cfg.D) throw std::runtime_error("sampler returned a wrong shape");
        const auto& slots = plan.group(k);
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (!generated.emplace(slots[i], x.row(static_cast<Index>(i))).second)
                throw std::logic_error("slot generated twice");
        }
    }
    Matrix<Scalar> frame(cfg.S, cfg.D);
    for (int s = 0; s < cfg.S; ++s) {
        auto it = generated.find(s);
        if (it == generated.end()) throw std::logic_error("plan left slot " + std::to_string(s) + " ungenerated");
        frame.row(s) = it->second;
    }
    return frame;
}

template <typename Scalar>
Matrix<Scalar> mar_generate(const Weights<Scalar>& weights, const ModelConfig& cfg, const Matrix<Scalar>& h_cond,
                            const Matrix<Scalar>& h_anchor, const GroupPlan& plan, const GroupSampler<Scalar>& sampler) {
    ad::Tape<Scalar> tape(false);
    const auto w = bind(tape, weights, cfg);
    return mar_generate(tape, w, cfg, h_cond, h_anchor, plan, sampler);
}

} // namespace sinkstream

#endif // SINKSTREAM_MAR_HPP
