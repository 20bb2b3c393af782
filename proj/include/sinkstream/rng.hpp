// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_RNG_HPP
#define SINKSTREAM_RNG_HPP

#include <cstdint>
#include <string_view>

namespace sinkstream {

/// Counter-based random stream keyed by (seed, label[, index...]).
///
/// Draw i of a stream is a pure function of (key, i), so two streams with the
/// same derivation path produce the same sequence on every platform, and
/// adding draws to one stream never shifts another. Normals use Box-Muller on
/// two uniforms; no state is carried between calls besides the counter.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view label);

    /// Independent child stream; `child(label)` and `child(index)` never collide
    /// with the parent.
    [[nodiscard]] Rng child(std::string_view label) const;
    [[nodiscard]] Rng child(std::uint64_t index) const;

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). Requires n > 0.
    std::uint64_t below(std::uint64_t n);
    double normal();

    [[nodiscard]] std::uint64_t key() const { return key_; }
    [[nodiscard]] std::uint64_t counter() const { return counter_; }

private:
    explicit Rng(std::uint64_t key) : key_(key) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

} // namespace sinkstream

#endif // SINKSTREAM_RNG_HPP
