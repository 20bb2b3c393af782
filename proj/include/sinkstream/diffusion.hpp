// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_DIFFUSION_HPP
#define SINKSTREAM_DIFFUSION_HPP

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sinkstream/autodiff.hpp"
#include "sinkstream/config.hpp"
#include "sinkstream/parameters.hpp"
#include "sinkstream/rng.hpp"
#include "sinkstream/types.hpp"

namespace sinkstream {

/// Linear-beta DDPM schedule. Index 0 of alpha_bar is the clean endpoint (1).
class NoiseSchedule {
public:
    NoiseSchedule(int steps, double beta_start, double beta_end);
    explicit NoiseSchedule(const ModelConfig& cfg) : NoiseSchedule(cfg.T_diff_train, cfg.beta_start, cfg.beta_end) {}

    [[nodiscard]] int steps() const { return static_cast<int>(betas_.size()); }
    /// beta_t for 1 <= t <= steps.
    [[nodiscard]] double beta(int t) const { return betas_.at(static_cast<std::size_t>(t - 1)); }
    /// alpha_bar_t for 0 <= t <= steps.
    [[nodiscard]] double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bar_;
};

/// Evenly strided sampling timesteps, ascending, from 1 to T inclusive
/// (just {T} for a single step).
std::vector<int> sampling_timesteps(int T, int steps);

/// sqrt(alpha_bar) x + sqrt(1 - alpha_bar) eps.
template <typename Scalar>
Matrix<Scalar> q_sample(const Matrix<Scalar>& x, double alpha_bar, const Matrix<Scalar>& eps) {
    return static_cast<Scalar>(std::sqrt(alpha_bar)) * x + static_cast<Scalar>(std::sqrt(1.0 - alpha_bar)) * eps;
}

template <typename Scalar>
Matrix<Scalar> q_sample(const Matrix<Scalar>& x, int t, const Matrix<Scalar>& eps, const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.steps()) throw std::out_of_range("diffusion timestep outside [1, T]");
    return q_sample(x, schedule.alpha_bar(t), eps);
}

/// Sinusoidal timestep features, one row per entry of `ts`.
template <typename Scalar>
Matrix<Scalar> timestep_features(const std::vector<int>& ts, int width) {
    Matrix<Scalar> f(static_cast<Index>(ts.size()), width);
    const int half = width / 2;
    for (std::size_t r = 0; r < ts.size(); ++r) {
        for (int i = 0; i < width; ++i) {
            const int k = i % std::max(half, 1);
            const double freq = std::exp(-std::log(10000.0) * k / std::max(half, 1));
            const double a = ts[r] * freq;
            f(static_cast<Index>(r), i) = static_cast<Scalar>(i < half ? std::sin(a) : std::cos(a));
        }
    }
    return f;
}

/// Noise predictor eps(x_t | t, z): SiLU MLP on [x_t, z] with the projected
/// timestep features added to the first hidden layer.
template <typename Scalar>
ad::Var<Scalar> head_forward(const BoundWeights<Scalar>& w, ad::Var<Scalar> x_t, ad::Var<Scalar> z,
                             ad::Var<Scalar> t_features) {
    using ad::operator+;
    using ad::operator*;
    auto h = ad::silu(ad::concat_cols<Scalar>({x_t, z}) * w.head_w1 + w.head_b1 + t_features * w.head_tw);
    h = ad::silu(h * w.head_w2 + w.head_b2);
    return h * w.head_w3 + w.head_b3;
}

/// Per-row timestep epsilon predictor used by the loss and sampler.
template <typename Scalar>
using EpsPredictor =
    std::function<Matrix<Scalar>(const Matrix<Scalar>& x_t, const std::vector<int>& t, const Matrix<Scalar>& z)>;

/// Wraps the learned head on a non-recording tape.
template <typename Scalar>
EpsPredictor<Scalar> head_predictor(ad::Tape<Scalar>& tape, const BoundWeights<Scalar>& w, const ModelConfig& cfg) {
    return [&tape, &w, width = cfg.head_width](const Matrix<Scalar>& x_t, const std::vector<int>& t,
                                               const Matrix<Scalar>& z) {
        return head_forward(w, tape.constant(x_t), tape.constant(z),
                            tape.constant(timestep_features<Scalar>(t, width)))
            .value();
    };
}

/// Mean over rows of ||eps - eps_theta(x_t | t, z)||^2, on the tape.
template <typename Scalar>
ad::Var<Scalar> diffusion_loss(ad::Tape<Scalar>& tape, const BoundWeights<Scalar>& w, const ModelConfig& cfg,
                               const NoiseSchedule& schedule, ad::Var<Scalar> z, const Matrix<Scalar>& x,
                               const std::vector<int>& ts, const Matrix<Scalar>& eps) {
    using ad::operator*;
    using ad::operator-;
    Matrix<Scalar> x_t(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        const double ab = schedule.alpha_bar(ts[static_cast<std::size_t>(r)]);
        x_t.row(r) = static_cast<Scalar>(std::sqrt(ab)) * x.row(r) + static_cast<Scalar>(std::sqrt(1.0 - ab)) * eps.row(r);
    }
    auto pred = head_forward(w, tape.constant(x_t), z, tape.constant(timestep_features<Scalar>(ts, cfg.head_width)));
    const auto target = tape.constant(eps);
    return (Scalar(1) / static_cast<Scalar>(x.rows())) * ad::sum_squares(target - pred);
}

/// Draws one timestep in [1, T] and a standard-normal eps per row.
template <typename Scalar>
void draw_loss_noise(Index rows, Index cols, int T, Rng& rng, std::vector<int>& ts, Matrix<Scalar>& eps) {
    ts.resize(static_cast<std::size_t>(rows));
    eps.resize(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        ts[static_cast<std::size_t>(r)] = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
        for (Index c = 0; c < cols; ++c) eps(r, c) = static_cast<Scalar>(rng.normal());
    }
}

/// Loss for an arbitrary predictor with explicit (t, eps); rows are tokens.
template <typename Scalar>
Scalar diffusion_loss(const EpsPredictor<Scalar>& predictor, const NoiseSchedule& schedule, const Matrix<Scalar>& z,
                      const Matrix<Scalar>& x, const std::vector<int>& ts, const Matrix<Scalar>& eps) {
    if (z.rows() != x.rows() || eps.rows() != x.rows() || eps.cols() != x.cols() ||
        static_cast<Index>(ts.size()) != x.rows())
        throw std::invalid_argument("diffusion_loss: shape mismatch");
    Matrix<Scalar> x_t(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r)
        x_t.row(r) = q_sample<Scalar>(x.row(r), ts[static_cast<std::size_t>(r)], eps.row(r), schedule);
    const Matrix<Scalar> pred = predictor(x_t, ts, z);
    return (eps - pred).squaredNorm() / static_cast<Scalar>(x.rows());
}

/// Loss for the learned head with (t, eps) drawn from `rng`.
template <typename Scalar>
Scalar diffusion_loss(const Weights<Scalar>& weights, const ModelConfig& cfg, const Matrix<Scalar>& z,
                      const Matrix<Scalar>& x, Rng& rng) {
    const NoiseSchedule schedule(cfg);
    std::vector<int> ts;
    Matrix<Scalar> eps;
    draw_loss_noise(x.rows(), x.cols(), cfg.T_diff_train, rng, ts, eps);
    ad::Tape<Scalar> tape(false);
    const auto w = bind(tape, weights, cfg);
    return diffusion_loss(head_predictor(tape, w, cfg), schedule, z, x, ts, eps);
}

/// Ancestral DDPM sampling on a strided sub-schedule, one token per row of z.
template <typename Scalar>
Matrix<Scalar> ddpm_sample(const EpsPredictor<Scalar>& predictor, const NoiseSchedule& schedule,
                           const Matrix<Scalar>& z, int steps, Rng& rng) {
    if (steps < 1) throw std::invalid_argument("ddpm_sample needs at least one step");
    if (steps > schedule.steps()) throw std::invalid_argument("more sampler steps than training timesteps");
    const std::vector<int> taus = sampling_timesteps(schedule.steps(), steps);
    Matrix<Scalar> x(z.rows(), z.cols());
    for (Index r = 0; r < x.rows(); ++r)
        for (Index c = 0; c < x.cols(); ++c) x(r, c) = static_cast<Scalar>(rng.normal());

    for (int i = steps - 1; i >= 0; --i) {
        const int t = taus[static_cast<std::size_t>(i)];
        const int prev = i > 0 ? taus[static_cast<std::size_t>(i - 1)] : 0;
        const double ab = schedule.alpha_bar(t);
        const double ab_prev = schedule.alpha_bar(prev);
        const double alpha = ab / ab_prev;
        const double beta = 1.0 - alpha;
        const Matrix<Scalar> eps = predictor(x, std::vector<int>(static_cast<std::size_t>(x.rows()), t), z);
        x = (x - static_cast<Scalar>(beta / std::sqrt(1.0 - ab)) * eps) / static_cast<Scalar>(std::sqrt(alpha));
        if (prev > 0) {
            const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta);
            for (Index r = 0; r < x.rows(); ++r)
                for (Index c = 0; c < x.cols(); ++c) x(r, c) += static_cast<Scalar>(sigma * rng.normal());
        }
    }
    return x;
}

} // namespace sinkstream

#endif // SINKSTREAM_DIFFUSION_HPP
