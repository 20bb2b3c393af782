// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_EVALUATION_HPP
#define SINKSTREAM_EVALUATION_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <vector>

#include "sinkstream/config.hpp"
#include "sinkstream/pipeline.hpp"
#include "sinkstream/puppet.hpp"

namespace sinkstream {

/// Held-out puppet sequences, disjoint from training draws by stream label.
struct HeldOut {
    std::vector<PuppetParams> puppets;
    std::vector<PuppetSequence> sequences;
};

inline HeldOut make_held_out(const ModelConfig& cfg, int count, int frames) {
    const Rng root(cfg.seed, "held-out");
    HeldOut h;
    for (int i = 0; i < count; ++i) {
        Rng p = root.child(static_cast<std::uint64_t>(i)).child("puppet");
        Rng s = root.child(static_cast<std::uint64_t>(i)).child("sequence");
        h.puppets.push_back(make_puppet(cfg, p));
        h.sequences.push_back(gen_puppet_sequence(h.puppets.back(), frames, s));
    }
    return h;
}

/// Conditions of frames 2..T of a sequence, as a pull source.
inline ConditionSource<double> sequence_source(const PuppetSequence& seq) {
    return vector_source(std::vector<ConditionFrame<double>>(seq.conditions.begin() + 1, seq.conditions.end()));
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    if (a.size() != b.size() || a.size() < 2) return 0;
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return 0;
    return sab / std::sqrt(saa * sbb);
}

/// Rollout metrics over held-out sequences of 3x the training window.
struct RolloutMetrics {
    double correlation = 0; // Pearson(c_t, read-out state of generated X_t), pooled over frames 2..T
    double drift = 0;       // off-manifold residual RMS over the last window, relative to reference RMS
    double max_rms_ratio = 0; // max_t RMS(X_t) / RMS of training-distribution frames
};

/// RMS of the part of a frame not explained by the puppet's emission map.
inline double off_manifold_rms(const PuppetParams& p, const Matrix<double>& frame) {
    const double s = read_state(p, frame);
    return rms(frame - p.base - s * p.direction);
}

inline RolloutMetrics evaluate_rollouts(const std::shared_ptr<const Weights<double>>& weights, const ModelConfig& cfg,
                                        int count = 16) {
    const int window = cfg.window();
    const int T = 3 * window;
    const HeldOut h = make_held_out(cfg, count, T);
    const Rng seeds(cfg.seed, "eval-sampling");
    std::vector<double> controls, states;
    double drift = 0, data_sq = 0, max_rms = 0;
    int drift_n = 0, data_n = 0;
    for (int i = 0; i < count; ++i) {
        const auto& seq = h.sequences[static_cast<std::size_t>(i)];
        const auto& p = h.puppets[static_cast<std::size_t>(i)];
        const auto frames =
            generate<double>(weights, cfg, seq.frames.front(), sequence_source(seq), T, seeds.child(static_cast<std::uint64_t>(i)).key());
        for (int t = 1; t < T; ++t) {
            const auto& x = frames[static_cast<std::size_t>(t)];
            controls.push_back(seq.controls[static_cast<std::size_t>(t)]);
            states.push_back(read_state(p, x));
            max_rms = std::max(max_rms, rms(x));
            data_sq += seq.frames[static_cast<std::size_t>(t)].squaredNorm() /
                       static_cast<double>(seq.frames[static_cast<std::size_t>(t)].size());
            ++data_n;
            if (t >= T - window) {
                drift += off_manifold_rms(p, x) / rms(seq.frames.front());
                ++drift_n;
            }
        }
    }
    RolloutMetrics m;
    m.correlation = pearson(controls, states);
    m.drift = drift / std::max(drift_n, 1);
    m.max_rms_ratio = max_rms / std::sqrt(data_sq / std::max(data_n, 1));
    return m;
}

/// Mean frame-to-frame token RMS under constant-intensity streams.
struct IntensityResponse {
    double low_delta = 0;
    double high_delta = 0;
    double spike_delta = 0;     // delta at the spiked frame
    double baseline_delta = 0;  // same frame without the spike
    bool prefix_identical = true; // frames before the spike unchanged
};

inline IntensityResponse evaluate_intensity(const std::shared_ptr<const Weights<double>>& weights,
                                            const ModelConfig& cfg, double low, double high, int count = 8) {
    const int T = 3 * cfg.window();
    const HeldOut h = make_held_out(cfg, count, T);
    const Rng seeds(cfg.seed, "eval-intensity");
    const long long spike_at = 2 * cfg.window();
    IntensityResponse r;
    auto mean_delta = [&](const std::vector<Matrix<double>>& f) {
        double d = 0;
        for (std::size_t t = 2; t < f.size(); ++t) d += rms(f[t] - f[t - 1]);
        return d / static_cast<double>(f.size() - 2);
    };
    for (int i = 0; i < count; ++i) {
        const auto& seq = h.sequences[static_cast<std::size_t>(i)];
        const std::uint64_t seed = seeds.child(static_cast<std::uint64_t>(i)).key();
        auto constant = [&](double v) {
            std::vector<ConditionFrame<double>> c(seq.conditions.begin() + 1, seq.conditions.end());
            for (auto& f : c) f.intensity = v;
            return vector_source(std::move(c));
        };
        const auto lo = generate<double>(weights, cfg, seq.frames.front(), constant(low), T, seed);
        const auto hi = generate<double>(weights, cfg, seq.frames.front(), constant(high), T, seed);
        ConditionPatch<double> patch;
        patch.intensity = high;
        const auto spiked = generate<double>(weights, cfg, seq.frames.front(),
                                             override_condition(constant(low), spike_at, patch), T, seed);
        r.low_delta += mean_delta(lo) / count;
        r.high_delta += mean_delta(hi) / count;
        const auto s = static_cast<std::size_t>(spike_at - 1);
        r.spike_delta += rms(spiked[s] - spiked[s - 1]) / count;
        r.baseline_delta += rms(lo[s] - lo[s - 1]) / count;
        for (std::size_t t = 0; t < s; ++t) r.prefix_identical = r.prefix_identical && (spiked[t].array() == lo[t].array()).all();
    }
    return r;
}

/// Per-frame latency: minimum wall time over repeated sessions.
struct LatencyProfile {
    std::vector<double> ms; // index t - 1 for frame t
    std::vector<StepStats> stats;

    /// max_f |ms[f] / ms[N] - 1| over frames N+1..2N.
    [[nodiscard]] double steady_state_spread(int N) const {
        double worst = 0;
        const double ref = ms.at(static_cast<std::size_t>(N - 1));
        for (int f = N + 1; f <= 2 * N && f <= static_cast<int>(ms.size()); ++f)
            worst = std::max(worst, std::abs(ms[static_cast<std::size_t>(f - 1)] / ref - 1.0));
        return worst;
    }
};

template <typename Scalar>
LatencyProfile profile_latency(const std::shared_ptr<const Weights<Scalar>>& weights, const ModelConfig& cfg,
                               const Matrix<Scalar>& x_ref, const ConditionSource<Scalar>& source, long long T,
                               std::uint64_t seed, int repeats) {
    using Clock = std::chrono::steady_clock;
    LatencyProfile p;
    p.ms.assign(static_cast<std::size_t>(T), 1e300);
    for (int r = 0; r < repeats; ++r) {
        auto t0 = Clock::now();
        Session<Scalar> s(weights, cfg, x_ref, seed);
        auto record = [&](long long t) {
            const auto t1 = Clock::now();
            const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            auto& slot = p.ms[static_cast<std::size_t>(t - 1)];
            slot = std::min(slot, ms);
            if (r == 0) p.stats.push_back(s.stats());
        };
        record(1);
        for (long long t = 2; t <= T; ++t) {
            const auto cond = source(t);
            t0 = Clock::now();
            s.step(cond);
            record(t);
        }
    }
    return p;
}

} // namespace sinkstream

#endif // SINKSTREAM_EVALUATION_HPP
