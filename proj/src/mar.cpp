// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#include "sinkstream/mar.hpp"

#include <numeric>

namespace sinkstream {

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace

GroupPlan make_group_plan(int S, int K, Rng& rng) {
    if (S < 1) throw std::invalid_argument("S must be >= 1");
    if (K < 1 || K > S) throw std::invalid_argument("group count must satisfy 1 <= K <= S");
    std::vector<int> slots(static_cast<std::size_t>(S));
    std::iota(slots.begin(), slots.end(), 0);
    shuffle(slots, rng);

    std::vector<int> sizes(static_cast<std::size_t>(K), S / K);
    for (int i = 0; i < S % K; ++i) ++sizes[static_cast<std::size_t>(i)];
    shuffle(sizes, rng);

    GroupPlan plan;
    std::size_t at = 0;
    for (int size : sizes) {
        std::vector<int> g(slots.begin() + static_cast<std::ptrdiff_t>(at),
                           slots.begin() + static_cast<std::ptrdiff_t>(at + static_cast<std::size_t>(size)));
        std::sort(g.begin(), g.end());
        plan.groups.push_back(std::move(g));
        at += static_cast<std::size_t>(size);
    }
    return plan;
}

std::string check_group_plan(const GroupPlan& plan, int S) {
    if (plan.groups.empty()) return "plan has no groups";
    std::vector<int> seen(static_cast<std::size_t>(S), 0);
    std::size_t lo = plan.groups.front().size(), hi = lo;
    for (const auto& g : plan.groups) {
        if (g.empty()) return "empty group";
        lo = std::min(lo, g.size());
        hi = std::max(hi, g.size());
        for (int s : g) {
            if (s < 0 || s >= S) return "slot " + std::to_string(s) + " out of range";
            if (seen[static_cast<std::size_t>(s)]++) return "slot " + std::to_string(s) + " appears twice";
        }
    }
    for (int s = 0; s < S; ++s)
        if (!seen[static_cast<std::size_t>(s)]) return "slot " + std::to_string(s) + " not covered";
    if (hi - lo > 1) return "group sizes differ by more than one";
    return {};
}

} // namespace sinkstream
