// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#include "sinkstream/posenc.hpp"

#include <string>

namespace sinkstream {

namespace {

void require_window(long long t, int N) {
    if (t < 1) throw std::invalid_argument("frame index must be >= 1, got " + std::to_string(t));
    if (N < 2) throw std::invalid_argument("window N must be >= 2, got " + std::to_string(N));
}

} // namespace

int temporal_index(long long t, int N) {
    require_window(t, N);
    const long long size = 2LL * N - 1;
    if (t <= size) return static_cast<int>(t);
    const long long cycle = 2LL * N - 2;
    return static_cast<int>((t - 2) % cycle + 2);
}

int temporal_index_literal(long long t, int N) {
    require_window(t, N);
    const long long size = 2LL * N - 1;
    if (t <= size) return static_cast<int>(t);
    const long long cycle = 2LL * N - 2;
    return static_cast<int>((t - 1) % cycle + 1);
}

int training_offset(int N, Rng& rng) {
    if (N < 2) throw std::invalid_argument("window N must be >= 2");
    return 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * N - 2)));
}

std::vector<int> training_indices(int N, int frames, int offset) {
    if (N < 2) throw std::invalid_argument("window N must be >= 2");
    if (frames < 1) throw std::invalid_argument("training window needs at least one frame");
    if (offset < 2 || offset > 2 * N - 1) throw std::invalid_argument("offset must lie in [2, 2N-1]");
    const int cycle = 2 * N - 2;
    std::vector<int> idx{1};
    for (int i = 0; i < frames - 1; ++i) idx.push_back((offset - 2 + i) % cycle + 2);
    return idx;
}

int intensity_bin(double value, double bin_width, int bins) {
    if (!(value >= 0)) throw std::invalid_argument("motion intensity must be >= 0");
    if (!(bin_width > 0)) throw std::invalid_argument("intensity bin width must be > 0");
    const double q = std::floor(value / bin_width);
    if (q >= bins - 1) return bins - 1;
    return static_cast<int>(q);
}

} // namespace sinkstream
