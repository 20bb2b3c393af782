// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#include "sinkstream/puppet.hpp"

#include <cmath>
#include <stdexcept>

namespace sinkstream {

namespace {

Matrix<double> normal_matrix(Index r, Index c, double stddev, Rng& rng) {
    Matrix<double> m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = stddev * rng.normal();
    return m;
}

} // namespace

PuppetParams make_puppet(const ModelConfig& cfg, Rng& rng) {
    const Rng world(cfg.seed, "puppet-world");
    Rng dir_rng = world.child("direction");
    Rng base_rng = world.child("base-map");
    Rng audio_rng = world.child("audio");

    PuppetParams p;
    p.rho = cfg.puppet_rho;
    p.gain = 1.0 - cfg.puppet_rho;
    p.control_phi = cfg.puppet_control_phi;
    p.audio_noise = cfg.puppet_audio_noise;
    p.emission_noise = cfg.puppet_emission_noise;
    p.direction = normal_matrix(cfg.S, cfg.D, 1.0, dir_rng);
    p.audio_proj = normal_matrix(cfg.A, 3, 1.0, audio_rng);

    const Matrix<double> base_map = normal_matrix(cfg.D, cfg.S * cfg.D, 1.0 / std::sqrt(cfg.D), base_rng);
    p.id = normal_matrix(1, cfg.D, 1.0, rng);
    const RowVector<double> flat = p.id * base_map;
    p.base.resize(cfg.S, cfg.D);
    for (int s = 0; s < cfg.S; ++s) p.base.row(s) = flat.segment(s * cfg.D, cfg.D);
    return p;
}

PuppetSequence gen_puppet_sequence(const PuppetParams& p, int T, Rng& rng,
                                   const std::optional<std::vector<double>>& control) {
    if (T < 2) throw std::invalid_argument("puppet sequences need T >= 2");
    if (!(p.rho >= 0 && p.rho < 1)) throw std::invalid_argument("puppet decay must lie in [0, 1)");
    if (control && static_cast<int>(control->size()) != T)
        throw std::invalid_argument("explicit control must have T entries");
    const Index S = p.base.rows(), D = p.base.cols(), A = p.audio_proj.rows();
    Rng control_rng = rng.child("control");
    Rng emission_rng = rng.child("emission");
    Rng audio_rng = rng.child("audio");

    PuppetSequence seq;
    std::vector<double> c(static_cast<std::size_t>(T), 0.0);
    for (int t = 1; t < T; ++t) {
        if (control) {
            c[static_cast<std::size_t>(t)] = (*control)[static_cast<std::size_t>(t)];
        } else {
            const double prev = t == 1 ? 0.0 : c[static_cast<std::size_t>(t - 1)];
            // Frame 2 starts from the stationary law so short windows see the full state range.
            c[static_cast<std::size_t>(t)] =
                t == 1 ? control_rng.normal()
                       : p.control_phi * prev + std::sqrt(1.0 - p.control_phi * p.control_phi) * control_rng.normal();
        }
    }
    double s_prev = 0.0;
    for (int t = 0; t < T; ++t) {
        const double s = t == 0 ? 0.0 : p.rho * s_prev + p.gain * c[static_cast<std::size_t>(t)];
        Matrix<double> frame = p.base + s * p.direction;
        if (t > 0 && p.emission_noise > 0) {
            for (Index i = 0; i < S; ++i)
                for (Index j = 0; j < D; ++j) frame(i, j) += p.emission_noise * emission_rng.normal();
        }
        Vector<double> history(3);
        for (int k = 0; k < 3; ++k) {
            const int idx = t - 2 + k;
            history(k) = idx >= 0 ? c[static_cast<std::size_t>(idx)] : 0.0;
        }
        Vector<double> audio = p.audio_proj * history;
        for (Index a = 0; a < A; ++a) audio(a) += p.audio_noise * audio_rng.normal();

        const double intensity = t == 0 ? 0.0 : std::abs(s - s_prev);
        seq.frames.push_back(std::move(frame));
        seq.conditions.push_back({audio, intensity});
        seq.intensities.push_back(intensity);
        seq.controls.push_back(c[static_cast<std::size_t>(t)]);
        seq.states.push_back(s);
        s_prev = s;
    }
    return seq;
}

double read_state(const PuppetParams& p, const Matrix<double>& frame) {
    return (frame - p.base).cwiseProduct(p.direction).sum() / p.direction.squaredNorm();
}

double rms(const Matrix<double>& m) { return std::sqrt(m.squaredNorm() / static_cast<double>(m.size())); }

std::vector<Matrix<double>> perturb_frames(const std::vector<Matrix<double>>& frames, double gamma_max, Rng& rng) {
    if (gamma_max < 0) throw std::invalid_argument("gamma_max must be >= 0");
    std::vector<Matrix<double>> out;
    out.reserve(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) {
        Rng frame_rng = rng.child(f);
        Matrix<double> noisy = frames[f];
        if (gamma_max > 0) {
            const double scale = frame_rng.uniform(0.0, gamma_max) * rms(frames[f]);
            Matrix<double> noise(noisy.rows(), noisy.cols());
            for (Index i = 0; i < noise.rows(); ++i)
                for (Index j = 0; j < noise.cols(); ++j) noise(i, j) = frame_rng.normal();
            // Unit-RMS noise so the realized perturbation RMS equals the drawn scale.
            const double n = rms(noise);
            if (n > 0) noisy += (scale / n) * noise;
        }
        out.push_back(std::move(noisy));
    }
    return out;
}

} // namespace sinkstream
