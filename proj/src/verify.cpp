// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#include "sinkstream/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "sinkstream/attention.hpp"
#include "sinkstream/diffusion.hpp"
#include "sinkstream/evaluation.hpp"
#include "sinkstream/mar.hpp"
#include "sinkstream/pipeline.hpp"
#include "sinkstream/posenc.hpp"
#include "sinkstream/training.hpp"

namespace sinkstream {

namespace {

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

} // namespace

Weights<double> random_weights(const ModelConfig& cfg, double jitter) {
    Weights<double> w = init_weights<double>(cfg);
    Rng rng(cfg.seed, "random-weights");
    w.for_each([&](const std::string& name, Matrix<double>& m) {
        if (!is_trainable(name, cfg)) return;
        for (Index i = 0; i < m.size(); ++i) m.data()[i] += jitter * rng.normal();
    });
    return w;
}

CheckResult check_position_cycling(const std::vector<int>& windows, int t_max) {
    for (int N : windows) {
        // Oracle: walk the table by hand. 1, 2, ..., 2N-1, then 2, 3, ... wrapping to 2.
        std::vector<int> oracle{0};
        int idx = 0;
        for (int t = 1; t <= t_max; ++t) {
            if (t == 1) {
                idx = 1;
            } else {
                idx = idx + 1;
                if (idx > 2 * N - 1) idx = 2;
            }
            oracle.push_back(idx);
        }
        for (int t = 1; t <= t_max; ++t) {
            const int got = temporal_index(t, N);
            if (got != oracle[static_cast<std::size_t>(t)])
                return {false, "N=" + std::to_string(N) + " t=" + std::to_string(t) + ": got " + std::to_string(got) +
                                   ", expected " + std::to_string(oracle[static_cast<std::size_t>(t)])};
            if (t > 1 && got == 1) return {false, "index 1 reused at t=" + std::to_string(t)};
            std::set<int> window{temporal_index(1, N)};
            for (int f = std::max(2, t - N + 2); f <= t; ++f) {
                if (!window.insert(temporal_index(f, N)).second)
                    return {false, "duplicate index in the window ending at t=" + std::to_string(t)};
            }
        }
    }
    return {true, "t=1.." + std::to_string(t_max) + " matches the enumeration"};
}

namespace {

template <typename Scalar>
CheckResult cache_equivalence(const ModelConfig& cfg, int T, double tol) {
    const auto weights = cast_weights<Scalar>(random_weights(cfg));
    Rng rng(cfg.seed, "cache-equiv");
    std::vector<FrameInput<Scalar>> inputs;
    for (int t = 1; t <= T; ++t) {
        FrameInput<Scalar> in;
        if (t > 1) {
            Vector<Scalar> a(cfg.A);
            for (int i = 0; i < cfg.A; ++i) a(i) = static_cast<Scalar>(rng.normal());
            in.audio = a;
        }
        in.intensity = rng.uniform(0.0, 1.0);
        in.visual.resize(cfg.S, cfg.D);
        for (Index i = 0; i < in.visual.size(); ++i) in.visual.data()[i] = static_cast<Scalar>(rng.normal());
        in.position = temporal_index(t, cfg.N);
        inputs.push_back(std::move(in));
    }

    ad::Tape<Scalar> full_tape(false);
    const auto fw = bind(full_tape, weights, cfg);
    const Matrix<Scalar> full = fca_forward(full_tape, fw, cfg, inputs, CachePolicy::streaming(cfg)).value();

    SinkWindowCache<Scalar> cache(cfg);
    const int stride = cfg.frame_tokens();
    double worst = 0;
    for (int t = 1; t <= T; ++t) {
        const auto& in = inputs[static_cast<std::size_t>(t - 1)];
        ad::Tape<Scalar> tape(false);
        const auto w = bind(tape, weights, cfg);
        const auto out = fca_step(tape, w, cfg, in.audio, in.intensity, in.visual, cache, t);
        const auto base = static_cast<Index>(t - 1) * stride;
        worst = std::max(worst, static_cast<double>((out.h_cond - full.middleRows(base, 2)).cwiseAbs().maxCoeff()));
        worst = std::max(worst, static_cast<double>((out.h - full.middleRows(base + 2, cfg.S)).cwiseAbs().maxCoeff()));
    }
    return {worst <= tol, "max |stream - full| = " + fmt(worst) + " (tol " + fmt(tol) + ")"};
}

} // namespace

CheckResult check_cache_equivalence_f32(const ModelConfig& cfg, int T) { return cache_equivalence<float>(cfg, T, 1e-5); }

CheckResult check_cache_equivalence_f64(const ModelConfig& cfg, int T) {
    return cache_equivalence<double>(cfg, T, 1e-10);
}

CheckResult check_sink_retention(const ModelConfig& cfg, int T) {
    const auto weights = random_weights(cfg);
    SinkWindowCache<double> cache(cfg);
    Rng rng(cfg.seed, "sink-retention");
    std::size_t steady_bytes = 0;
    for (int t = 1; t <= T; ++t) {
        Matrix<double> x(cfg.S, cfg.D);
        for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
        std::optional<Vector<double>> audio;
        if (t > 1) audio = Vector<double>::Constant(cfg.A, rng.normal());
        fca_step(weights, cfg, audio, 0.1, x, cache, t);
        const std::string at = " after frame " + std::to_string(t);
        if (!cache.has_sink()) return {false, "sink missing" + at};
        const auto& sink = cache.frames().front();
        if (static_cast<int>(sink.keys.size()) != cfg.L || static_cast<int>(sink.values.size()) != cfg.L)
            return {false, "sink keys missing at some layer" + at};
        for (const auto& f : cache.frames())
            if (static_cast<int>(f.keys.size()) != cfg.L) return {false, "frame without keys at every layer" + at};
        if (static_cast<int>(cache.size()) != std::min(t, cfg.N))
            return {false, "cached frames " + std::to_string(cache.size()) + at};
        const auto ids = cache.frame_ids();
        for (std::size_t i = 1; i < ids.size(); ++i)
            if (ids[i] != t - static_cast<long long>(ids.size() - 1 - i))
                return {false, "window is not the most recent frames" + at};
        if (t == cfg.N) steady_bytes = cache.bytes();
        if (t > cfg.N && cache.bytes() != steady_bytes)
            return {false, "cache grew to " + std::to_string(cache.bytes()) + " bytes" + at};
    }
    return {true, "sink kept for " + std::to_string(T) + " frames; cache pinned at " + std::to_string(cfg.N) +
                      " frames / " + std::to_string(steady_bytes) + " bytes"};
}

CheckResult check_causality(const std::shared_ptr<const Weights<double>>& weights, const ModelConfig& cfg, int T,
                            int edits) {
    const HeldOut h = make_held_out(cfg, 1, T);
    const auto& seq = h.sequences.front();
    const auto source = sequence_source(seq);
    const std::uint64_t seed = Rng(cfg.seed, "causality").key();
    const auto base = generate<double>(weights, cfg, seq.frames.front(), source, T, seed);

    Rng rng(cfg.seed, "causality-edits");
    std::vector<long long> picks;
    for (long long t = 2; t <= T; ++t) picks.push_back(t);
    for (std::size_t i = picks.size() - 1; i > 0; --i) std::swap(picks[i], picks[rng.below(i + 1)]);
    picks.resize(std::min<std::size_t>(picks.size(), static_cast<std::size_t>(edits)));
    std::sort(picks.begin(), picks.end());

    for (long long at : picks) {
        ConditionPatch<double> patch;
        patch.intensity = seq.conditions[static_cast<std::size_t>(at - 1)].intensity + 0.5;
        patch.audio = seq.conditions[static_cast<std::size_t>(at - 1)].audio + Vector<double>::Constant(cfg.A, 1.0);
        const auto edited = generate<double>(weights, cfg, seq.frames.front(), override_condition(source, at, patch), T, seed);
        for (long long t = 1; t < at; ++t)
            if (!(edited[static_cast<std::size_t>(t - 1)].array() == base[static_cast<std::size_t>(t - 1)].array()).all())
                return {false, "editing C_" + std::to_string(at) + " changed frame " + std::to_string(t)};
        if ((edited[static_cast<std::size_t>(at - 1)].array() == base[static_cast<std::size_t>(at - 1)].array()).all())
            return {false, "editing C_" + std::to_string(at) + " did not change frame " + std::to_string(at)};
    }
    std::string list;
    for (auto p : picks) list += (list.empty() ? "" : ",") + std::to_string(p);
    return {true, "edited t=" + list + " of T=" + std::to_string(T)};
}

CheckResult check_partition_law(int trials, std::uint64_t seed) {
    Rng rng(seed, "partition-law");
    for (int i = 0; i < trials; ++i) {
        const int S = 1 + static_cast<int>(rng.below(64));
        const int K = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(S)));
        const GroupPlan plan = make_group_plan(S, K, rng);
        // Independent check of the law, not check_group_plan.
        std::vector<int> seen(static_cast<std::size_t>(S), 0);
        if (plan.size() != K) return {false, "plan has wrong group count"};
        for (const auto& g : plan.groups) {
            const int size = static_cast<int>(g.size());
            if (size != S / K && size != (S + K - 1) / K)
                return {false, "unbalanced group for S=" + std::to_string(S) + " K=" + std::to_string(K)};
            for (int s : g) {
                if (s < 0 || s >= S) return {false, "slot out of range"};
                ++seen[static_cast<std::size_t>(s)];
            }
        }
        if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; }))
            return {false, "plan not a disjoint cover for S=" + std::to_string(S) + " K=" + std::to_string(K)};
    }
    return {true, std::to_string(trials) + " plans disjoint, covering, balanced"};
}

CheckResult check_diffusion_limits(const ModelConfig& cfg, int draws) {
    const NoiseSchedule schedule(cfg);
    Rng rng(cfg.seed, "diffusion-limits");
    Matrix<double> x(draws, cfg.D), z(draws, cfg.D);
    for (Index i = 0; i < x.size(); ++i) {
        x.data()[i] = rng.normal();
        z.data()[i] = rng.normal();
    }
    std::vector<int> ts;
    Matrix<double> eps;
    draw_loss_noise(x.rows(), x.cols(), cfg.T_diff_train, rng, ts, eps);
    const EpsPredictor<double> oracle = [&](const Matrix<double>&, const std::vector<int>&, const Matrix<double>&) {
        return eps;
    };
    const EpsPredictor<double> zero = [&](const Matrix<double>& xt, const std::vector<int>&, const Matrix<double>&) {
        return Matrix<double>::Zero(xt.rows(), xt.cols()).eval();
    };
    const double oracle_loss = diffusion_loss(oracle, schedule, z, x, ts, eps);
    const double zero_loss = diffusion_loss(zero, schedule, z, x, ts, eps);
    const double rel = std::abs(zero_loss - cfg.D) / cfg.D;
    return {oracle_loss == 0.0 && rel <= 0.05,
            "oracle loss " + fmt(oracle_loss) + ", zero-head loss " + fmt(zero_loss) + " vs D=" + std::to_string(cfg.D)};
}

CheckResult check_gradients(double tolerance) {
    const auto t0 = std::chrono::steady_clock::now();
    const GradcheckReport r = gradcheck(tiny_config());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {r.max_rel_error <= tolerance && secs < 120,
            "max rel error " + fmt(r.max_rel_error) + " (" + r.worst + ") over " + std::to_string(r.groups.size()) +
                " tensors in " + fmt(secs) + " s"};
}

CheckResult check_drift_bound(const std::shared_ptr<const Weights<double>>& weights, const ModelConfig& cfg) {
    const RolloutMetrics m = evaluate_rollouts(weights, cfg);
    return {m.max_rms_ratio <= 2.0, "max frame RMS / data RMS = " + fmt(m.max_rms_ratio) + " at 3x window"};
}

CheckResult check_latency(const std::shared_ptr<const Weights<double>>& weights, const ModelConfig& cfg, int repeats) {
    const int T = 2 * cfg.N;
    const HeldOut h = make_held_out(cfg, 1, T);
    const auto& seq = h.sequences.front();
    const LatencyProfile p =
        profile_latency<double>(weights, cfg, seq.frames.front(), sequence_source(seq), T, cfg.seed, repeats);
    const double spread = p.steady_state_spread(cfg.N);
    return {spread <= 0.2, "frame N " + fmt(p.ms[static_cast<std::size_t>(cfg.N - 1)]) +
                               " ms; worst deviation over frames N+1..2N " + fmt(100 * spread) + "%"};
}

} // namespace sinkstream
