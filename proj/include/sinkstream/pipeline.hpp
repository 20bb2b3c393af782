// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_PIPELINE_HPP
#define SINKSTREAM_PIPELINE_HPP

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sinkstream/attention.hpp"
#include "sinkstream/config.hpp"
#include "sinkstream/diffusion.hpp"
#include "sinkstream/mar.hpp"
#include "sinkstream/parameters.hpp"
#include "sinkstream/rng.hpp"
#include "sinkstream/types.hpp"

namespace sinkstream {

/// Diagnostics for one generated frame.
struct StepStats {
    long long frame = 0;
    int position = 0;
    std::size_t cached_frames = 0;
    std::size_t cached_bytes = 0;
    std::size_t attended_tokens = 0;
};

/// Streaming generation state for one reference frame.
///
/// Frame 1 is the reference itself; every step() produces the next frame.
/// A step works on copies and commits only on success, so a failed step
/// leaves the session where it was and the retry draws fresh noise.
template <typename Scalar>
class Session {
public:
    /// Runs frame 1 on the reference with the null audio token and sets the anchor.
    Session(std::shared_ptr<const Weights<Scalar>> weights, const ModelConfig& cfg, const Matrix<Scalar>& x_ref,
            std::uint64_t seed, double intensity1 = 0.0)
        : weights_(std::move(weights)), cfg_(cfg), schedule_(cfg), cache_(cfg), rng_(seed, "session") {
        require_valid(cfg_);
        if (!weights_) throw std::invalid_argument("session needs weights");
        check_weights();
        LatentFrame<Scalar>{x_ref}.require(cfg_);
        ad::Tape<Scalar> tape(false);
        const auto w = bind(tape, *weights_, cfg_);
        const auto out = fca_step(tape, w, cfg_, std::optional<Vector<Scalar>>{}, intensity1, x_ref, cache_, 1);
        hidden_ = {out.h, out.h_cond, out.h};
        sink_.set_anchor(out.h);
        last_ = x_ref;
        t_ = 1;
        stats_ = {1, out.position, cache_.size(), cache_.bytes(), out.attended_tokens};
        if (cfg_.fixed_plan) {
            Rng plan_rng = rng_.child("fixed-plan");
            fixed_plan_ = make_group_plan(cfg_.S, cfg_.K, plan_rng);
        }
    }

    [[nodiscard]] long long frame() const { return t_; }
    [[nodiscard]] const Matrix<Scalar>& last_frame() const { return last_; }
    [[nodiscard]] const SinkWindowCache<Scalar>& cache() const { return cache_; }
    [[nodiscard]] const Matrix<Scalar>& anchor() const { return sink_.anchor(); }
    [[nodiscard]] const FrameHidden<Scalar>& hidden() const { return hidden_; }
    [[nodiscard]] const StepStats& stats() const { return stats_; }
    [[nodiscard]] const ModelConfig& config() const { return cfg_; }

    /// Generates frame t + 1 from its condition.
    Matrix<Scalar> step(const ConditionFrame<Scalar>& cond) {
        cond.require(cfg_);
        const long long t = t_ + 1;
        const Rng frame_rng = rng_.child(static_cast<std::uint64_t>(t)).child(static_cast<std::uint64_t>(attempt_));
        ++attempt_;

        SinkWindowCache<Scalar> cache = cache_;
        ad::Tape<Scalar> tape(false);
        const auto w = bind(tape, *weights_, cfg_);
        const auto out = fca_step(tape, w, cfg_, std::optional<Vector<Scalar>>(cond.audio),
                                  static_cast<double>(cond.intensity), last_, cache, t);
        const Matrix<Scalar> h_anchor =
            cfg_.adaln_sink
                ? adaln_modulate(w, tape.constant(sink_.anchor()), tape.constant(out.h)).value()
                : out.h;

        GroupPlan plan;
        if (fixed_plan_) {
            plan = *fixed_plan_;
        } else {
            Rng plan_rng = frame_rng.child("plan");
            plan = make_group_plan(cfg_.S, cfg_.K, plan_rng);
        }
        const auto predictor = head_predictor(tape, w, cfg_);
        const Rng sample_rng = frame_rng.child("sample");
        GroupSampler<Scalar> sampler = [&](const Matrix<Scalar>& z, int k) {
            Rng r = sample_rng.child(static_cast<std::uint64_t>(k));
            return ddpm_sample(predictor, schedule_, z, cfg_.T_diff_sample, r);
        };
        Matrix<Scalar> x = mar_generate(tape, w, cfg_, out.h_cond, h_anchor, plan, sampler);
        if (!x.allFinite()) throw std::runtime_error("frame " + std::to_string(t) + " sampled non-finite tokens");

        // Commit.
        cache_ = std::move(cache);
        hidden_ = {out.h, out.h_cond, h_anchor};
        last_ = x;
        t_ = t;
        attempt_ = 0;
        stats_ = {t, out.position, cache_.size(), cache_.bytes(), out.attended_tokens};
        return x;
    }

private:
    void check_weights() const {
        const auto& w = *weights_;
        if (static_cast<int>(w.fca.size()) != cfg_.L || static_cast<int>(w.mar.size()) != cfg_.mar_layers ||
            w.vis_in_w.rows() != cfg_.D || w.audio_in_w.rows() != cfg_.A || w.vis_slot.rows() != cfg_.S ||
            w.pos_table.rows() != cfg_.table_size() || w.int_table.rows() != cfg_.B_int ||
            w.head_w1.cols() != cfg_.head_width)
            throw std::invalid_argument("weights do not match the config");
    }

    std::shared_ptr<const Weights<Scalar>> weights_;
    ModelConfig cfg_;
    NoiseSchedule schedule_;
    SinkWindowCache<Scalar> cache_;
    AdaLNSink<Scalar> sink_;
    Rng rng_;
    std::optional<GroupPlan> fixed_plan_;
    FrameHidden<Scalar> hidden_;
    Matrix<Scalar> last_;
    long long t_ = 0;
    int attempt_ = 0;
    StepStats stats_;
};

template <typename Scalar>
Session<Scalar> start_session(const Matrix<Scalar>& x_ref, std::shared_ptr<const Weights<Scalar>> weights,
                              const ModelConfig& cfg, std::uint64_t seed) {
    return Session<Scalar>(std::move(weights), cfg, x_ref, seed);
}

/// Pull-model condition stream: asked for C_t only when frame t is generated.
template <typename Scalar>
using ConditionSource = std::function<ConditionFrame<Scalar>(long long t)>;

/// In-memory stream, frames 2..T at index t - 2.
template <typename Scalar>
ConditionSource<Scalar> vector_source(std::vector<ConditionFrame<Scalar>> conds) {
    return [conds = std::move(conds)](long long t) {
        const auto i = static_cast<std::size_t>(t - 2);
        if (t < 2 || i >= conds.size()) throw std::out_of_range("missing frame " + std::to_string(t));
        return conds[i];
    };
}

/// Partial edit of one frame's condition.
template <typename Scalar>
struct ConditionPatch {
    std::optional<Vector<Scalar>> audio;
    std::optional<Scalar> intensity;

    [[nodiscard]] bool empty() const { return !audio && !intensity; }
};

/// The stream with frame `at` patched; every other frame is untouched.
template <typename Scalar>
ConditionSource<Scalar> override_condition(ConditionSource<Scalar> stream, long long at, ConditionPatch<Scalar> patch) {
    return [stream = std::move(stream), at, patch = std::move(patch)](long long t) {
        ConditionFrame<Scalar> c = stream(t);
        if (t == at) {
            if (patch.audio) c.audio = *patch.audio;
            if (patch.intensity) c.intensity = *patch.intensity;
        }
        return c;
    };
}

/// Runs a session to T frames (frame 1 is the reference); returns all T frames.
template <typename Scalar>
std::vector<Matrix<Scalar>> generate(std::shared_ptr<const Weights<Scalar>> weights, const ModelConfig& cfg,
                                     const Matrix<Scalar>& x_ref, const ConditionSource<Scalar>& source, long long T,
                                     std::uint64_t seed,
                                     const std::function<void(const StepStats&)>& on_frame = {}) {
    if (T < 1) throw std::invalid_argument("frame count must be >= 1");
    Session<Scalar> session(std::move(weights), cfg, x_ref, seed);
    std::vector<Matrix<Scalar>> frames{x_ref};
    if (on_frame) on_frame(session.stats());
    for (long long t = 2; t <= T; ++t) {
        frames.push_back(session.step(source(t)));
        if (on_frame) on_frame(session.stats());
    }
    return frames;
}

} // namespace sinkstream

#endif // SINKSTREAM_PIPELINE_HPP
