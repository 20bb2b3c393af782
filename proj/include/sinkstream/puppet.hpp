// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_PUPPET_HPP
#define SINKSTREAM_PUPPET_HPP

#include <optional>
#include <vector>

#include "sinkstream/config.hpp"
#include "sinkstream/rng.hpp"
#include "sinkstream/types.hpp"

namespace sinkstream {

/// Synthetic latent source: a scalar state driven by a control stream,
/// emitted as S x D tokens around an identity-dependent base frame.
///
///   c_t = phi c_{t-1} + sqrt(1 - phi^2) eta_t             (t >= 2, c_1 = 0)
///   s_t = rho s_{t-1} + gain c_t                          (s_1 = 0)
///   X_t = base(id) + s_t dir + emission_noise xi
///   audio_t = P [c_{t-2}, c_{t-1}, c_t] + audio_noise nu
///   intensity_t = |s_t - s_{t-1}|
struct PuppetParams {
    RowVector<double> id;       // D
    double rho = 0.3;
    double gain = 0.7;
    Matrix<double> base;        // S x D emission at s = 0
    Matrix<double> direction;   // S x D emission per unit state
    Matrix<double> audio_proj;  // A x 3
    double control_phi = 0.6;
    double audio_noise = 0.6;
    double emission_noise = 0.02;
};

struct PuppetSequence {
    std::vector<Matrix<double>> frames; // T frames, S x D; frame 0 is the reference
    std::vector<ConditionFrame<double>> conditions;
    std::vector<double> intensities;
    std::vector<double> controls;
    std::vector<double> states;
};

/// Puppet with a fresh identity; the emission direction and audio projection
/// are shared by every puppet built from the same config seed.
PuppetParams make_puppet(const ModelConfig& cfg, Rng& rng);

/// Runs the puppet for T >= 2 frames. When `control` is given it supplies
/// c_1..c_T (c_1 is ignored) instead of the random control process.
PuppetSequence gen_puppet_sequence(const PuppetParams& params, int T, Rng& rng,
                                   const std::optional<std::vector<double>>& control = std::nullopt);

/// Least-squares state estimate of a frame under the puppet's emission map.
double read_state(const PuppetParams& params, const Matrix<double>& frame);

/// Additive Gaussian noise with per-frame scale U[0, gamma_max] * RMS(frame).
std::vector<Matrix<double>> perturb_frames(const std::vector<Matrix<double>>& frames, double gamma_max, Rng& rng);

double rms(const Matrix<double>& m);

} // namespace sinkstream

#endif // SINKSTREAM_PUPPET_HPP
