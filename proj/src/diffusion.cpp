// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#include "sinkstream/diffusion.hpp"

namespace sinkstream {

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw std::invalid_argument("noise schedule needs at least one step");
    if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1))
        throw std::invalid_argument("noise schedule needs 0 < beta_start <= beta_end < 1");
    betas_.resize(static_cast<std::size_t>(steps));
    alpha_bar_.resize(static_cast<std::size_t>(steps) + 1);
    alpha_bar_[0] = 1.0;
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        betas_[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
        alpha_bar_[static_cast<std::size_t>(i) + 1] = alpha_bar_[static_cast<std::size_t>(i)] * (1.0 - betas_[static_cast<std::size_t>(i)]);
    }
}

std::vector<int> sampling_timesteps(int T, int steps) {
    if (steps < 1 || steps > T) throw std::invalid_argument("sampler steps must lie in [1, T]");
    if (steps == 1) return {T};
    std::vector<int> out;
    for (int i = 0; i < steps; ++i)
        out.push_back(1 + static_cast<int>(std::lround(static_cast<double>(i) * (T - 1) / (steps - 1))));
    return out;
}

} // namespace sinkstream
