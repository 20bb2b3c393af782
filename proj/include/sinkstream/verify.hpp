// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_VERIFY_HPP
#define SINKSTREAM_VERIFY_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sinkstream/config.hpp"
#include "sinkstream/parameters.hpp"

namespace sinkstream {

/// Outcome of one property check.
struct CheckResult {
    bool pass = false;
    std::string detail;
};

/// Independent enumeration of the cycle for t = 1..T_max at each N; also
/// checks that index 1 is never reused and windows never repeat an index.
CheckResult check_position_cycling(const std::vector<int>& windows = {2, 4, 10}, int t_max = 200);

/// Streaming fca_step vs one masked full-sequence pass, T frames, random
/// weights. Tolerance 1e-5 for float, 1e-10 for double.
CheckResult check_cache_equivalence_f32(const ModelConfig& cfg, int T);
CheckResult check_cache_equivalence_f64(const ModelConfig& cfg, int T);

/// Sink keys at every layer, cached frames = min(t, N), flat memory after N.
CheckResult check_sink_retention(const ModelConfig& cfg, int T);

/// Editing C_t leaves frames < t byte-identical and changes frame t.
CheckResult check_causality(const std::shared_ptr<const Weights<double>>& weights, const ModelConfig& cfg, int T,
                            int edits);

/// Random (S <= 64, K <= S) plans are disjoint, covering and balanced.
CheckResult check_partition_law(int trials, std::uint64_t seed);

/// Oracle head gives exactly zero loss; a zero head averages D within 5%.
CheckResult check_diffusion_limits(const ModelConfig& cfg, int draws);

/// Finite-difference check of the composed loss on the tiny config.
CheckResult check_gradients(double tolerance = 1e-3);

/// Per-frame RMS of a rollout at 3x the window stays within 2x the data RMS.
CheckResult check_drift_bound(const std::shared_ptr<const Weights<double>>& weights, const ModelConfig& cfg);

/// Frames N+1..2N within +-20% of frame N (minimum over repeats).
CheckResult check_latency(const std::shared_ptr<const Weights<double>>& weights, const ModelConfig& cfg, int repeats);

/// Random weights with every tensor jittered away from its init, so zero-init
/// tensors still participate.
Weights<double> random_weights(const ModelConfig& cfg, double jitter = 0.1);

} // namespace sinkstream

#endif // SINKSTREAM_VERIFY_HPP
