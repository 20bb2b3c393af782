// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_TRAINING_HPP
#define SINKSTREAM_TRAINING_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sinkstream/attention.hpp"
#include "sinkstream/autodiff.hpp"
#include "sinkstream/config.hpp"
#include "sinkstream/diffusion.hpp"
#include "sinkstream/mar.hpp"
#include "sinkstream/parameters.hpp"
#include "sinkstream/posenc.hpp"
#include "sinkstream/puppet.hpp"
#include "sinkstream/rng.hpp"

namespace sinkstream {

/// Random choices for one target frame: which slots are masked and the
/// diffusion (t, eps) for every masked slot and repeat.
template <typename Scalar>
struct FrameDraw {
    std::vector<int> masked;  // slots whose loss is taken
    std::vector<int> ts;      // masked.size() * repeats
    Matrix<Scalar> eps;       // same rows as ts, D columns
};

/// One teacher-forced training window. Frame 1 is the reference; targets are
/// frames 2..T_w.
template <typename Scalar>
struct TrainExample {
    std::vector<FrameInput<Scalar>> inputs; // T_w frames
    std::vector<Matrix<Scalar>> targets;    // T_w - 1 frames
    std::vector<FrameDraw<Scalar>> draws;   // T_w - 1 frames
    std::vector<double> intensities;        // ground truth for frames 2..T_w

    template <typename Other>
    [[nodiscard]] TrainExample<Other> cast() const {
        TrainExample<Other> out;
        for (const auto& in : inputs) {
            FrameInput<Other> o{std::nullopt, in.intensity, in.visual.template cast<Other>(), in.position};
            if (in.audio) o.audio = in.audio->template cast<Other>();
            out.inputs.push_back(std::move(o));
        }
        for (const auto& t : targets) out.targets.push_back(t.template cast<Other>());
        for (const auto& d : draws) out.draws.push_back({d.masked, d.ts, d.eps.template cast<Other>()});
        out.intensities = intensities;
        return out;
    }
};

template <typename Scalar>
using TrainBatch = std::vector<TrainExample<Scalar>>;

/// Extra frames generated before a window so segments start at varied states.
constexpr int kSegmentLead = 8;

struct ExampleOptions {
    bool zero_intensity = false; // first phase of two-phase training
    bool fixed_offset = false;   // positions 1, 2, 3, ... instead of a random cycle offset
};

/// Masked set for one frame: ceil(r S) slots with r ~ U[mask_ratio_min, 1].
inline std::vector<int> draw_masked_slots(const ModelConfig& cfg, Rng& rng) {
    const double r = rng.uniform(cfg.mask_ratio_min, 1.0);
    const int count = std::clamp(static_cast<int>(std::ceil(r * cfg.S - 1e-9)), 1, cfg.S);
    std::vector<int> slots(static_cast<std::size_t>(cfg.S));
    std::iota(slots.begin(), slots.end(), 0);
    for (int i = cfg.S - 1; i > 0; --i)
        std::swap(slots[static_cast<std::size_t>(i)], slots[rng.below(static_cast<std::uint64_t>(i + 1))]);
    slots.resize(static_cast<std::size_t>(count));
    std::sort(slots.begin(), slots.end());
    return slots;
}

/// Builds one window from a fresh puppet. Inputs after the reference are
/// noise-perturbed when cfg.input_noise is set; targets never are.
inline TrainExample<double> make_train_example(const ModelConfig& cfg, Rng rng, const ExampleOptions& opt = {}) {
    const int Tw = cfg.window();
    Rng puppet_rng = rng.child("puppet");
    const PuppetParams puppet = make_puppet(cfg, puppet_rng);
    Rng seq_rng = rng.child("sequence");
    const PuppetSequence seq = gen_puppet_sequence(puppet, Tw + kSegmentLead, seq_rng);

    // First target frame index j in the sequence; its input is frame j - 1.
    Rng seg_rng = rng.child("segment");
    const int j = 1 + static_cast<int>(seg_rng.below(static_cast<std::uint64_t>(kSegmentLead + 1)));
    std::vector<Matrix<double>> raw_inputs;
    for (int f = 0; f < Tw - 1; ++f) raw_inputs.push_back(seq.frames[static_cast<std::size_t>(j - 1 + f)]);
    Rng noise_rng = rng.child("perturb");
    const double gamma = cfg.input_noise ? cfg.gamma_max : 0.0;
    std::vector<Matrix<double>> noisy = perturb_frames(raw_inputs, gamma, noise_rng);
    // The reference is exact at inference, so it stays clean here too.
    for (int f = 0; f < Tw - 1; ++f)
        if (j - 1 + f == 0) noisy[static_cast<std::size_t>(f)] = raw_inputs[static_cast<std::size_t>(f)];

    Rng offset_rng = rng.child("offset");
    const int offset = opt.fixed_offset ? 2 : training_offset(cfg.N, offset_rng);
    const std::vector<int> positions = training_indices(cfg.N, Tw, offset);

    TrainExample<double> ex;
    ex.inputs.push_back({std::nullopt, 0.0, seq.frames.front(), positions.front()});
    Rng mask_rng = rng.child("mask");
    Rng diff_rng = rng.child("diffusion");
    for (int f = 0; f < Tw - 1; ++f) {
        const auto idx = static_cast<std::size_t>(j + f);
        const double intensity = opt.zero_intensity ? 0.0 : seq.intensities[idx];
        ex.inputs.push_back({seq.conditions[idx].audio, intensity, noisy[static_cast<std::size_t>(f)],
                             positions[static_cast<std::size_t>(f + 1)]});
        ex.targets.push_back(seq.frames[idx]);
        ex.intensities.push_back(seq.intensities[idx]);
        FrameDraw<double> d;
        d.masked = draw_masked_slots(cfg, mask_rng);
        draw_loss_noise(static_cast<Index>(d.masked.size() * static_cast<std::size_t>(cfg.diffusion_repeats)),
                        cfg.D, cfg.T_diff_train, diff_rng, d.ts, d.eps);
        ex.draws.push_back(std::move(d));
    }
    return ex;
}

inline TrainBatch<double> make_train_batch(const ModelConfig& cfg, Rng rng, const ExampleOptions& opt = {}) {
    TrainBatch<double> batch;
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(make_train_example(cfg, rng.child(b), opt));
    return batch;
}

/// Composed teacher-forced loss for one example: frame-causal pass over the
/// window, adaLN sink against the frame-1 anchor, masked-AR over each target
/// frame with its masked slots hidden, and the per-token diffusion loss
/// averaged over every masked slot, repeat and target frame.
///
/// With `oracle_head` the head's prediction is replaced by the true noise.
template <typename Scalar>
ad::Var<Scalar> example_loss(ad::Tape<Scalar>& tape, const BoundWeights<Scalar>& w, const ModelConfig& cfg,
                             const NoiseSchedule& schedule, const TrainExample<Scalar>& ex, bool oracle_head = false) {
    using ad::operator*;
    using ad::operator-;
    const int M = ModelConfig::condition_tokens();
    const int stride = cfg.frame_tokens();
    const auto out = fca_forward(tape, w, cfg, ex.inputs, CachePolicy::streaming(cfg));

    ad::Var<Scalar> anchor;
    if (cfg.adaln_sink) anchor = ad::normalize_rows(ad::rows(out, M, cfg.S), static_cast<Scalar>(kAnchorEps));

    const auto repeats = static_cast<std::size_t>(cfg.diffusion_repeats);
    std::vector<ad::Var<Scalar>> zs;
    Matrix<Scalar> x_rows(0, cfg.D);
    std::vector<int> ts;
    std::vector<Matrix<Scalar>> eps_parts;
    Index total = 0;
    for (std::size_t f = 0; f < ex.targets.size(); ++f) {
        const Index base = static_cast<Index>(f + 1) * stride;
        auto h_cond = ad::rows(out, base, M);
        auto h = ad::rows(out, base + M, cfg.S);
        auto h_anchor = cfg.adaln_sink ? adaln_modulate(w, anchor, h) : h;

        const auto& d = ex.draws[f];
        std::vector<bool> known(static_cast<std::size_t>(cfg.S), true);
        for (int s : d.masked) known[static_cast<std::size_t>(s)] = false;
        auto z = mar_forward(tape, w, cfg, h_cond, h_anchor, ex.targets[f], known);

        std::vector<Index> pick;
        for (std::size_t r = 0; r < repeats; ++r)
            for (int s : d.masked) pick.push_back(s);
        zs.push_back(ad::gather_rows(z, pick));
        Matrix<Scalar> x(static_cast<Index>(pick.size()), cfg.D);
        for (std::size_t i = 0; i < pick.size(); ++i) x.row(static_cast<Index>(i)) = ex.targets[f].row(pick[i]);
        x_rows.conservativeResize(total + x.rows(), Eigen::NoChange);
        x_rows.bottomRows(x.rows()) = x;
        total += x.rows();
        ts.insert(ts.end(), d.ts.begin(), d.ts.end());
        eps_parts.push_back(d.eps);
    }
    Matrix<Scalar> eps(total, cfg.D);
    Index r0 = 0;
    for (const auto& e : eps_parts) {
        eps.middleRows(r0, e.rows()) = e;
        r0 += e.rows();
    }
    auto z_all = ad::concat_rows(zs);
    if (oracle_head) {
        // Prediction equals the target noise: zero loss, still wired to z.
        auto zero = Scalar(0) * z_all;
        auto pred = ad::operator+(tape.constant(eps), zero);
        return (Scalar(1) / static_cast<Scalar>(total)) * ad::sum_squares(tape.constant(eps) - pred);
    }
    return diffusion_loss(tape, w, cfg, schedule, z_all, x_rows, ts, eps);
}

/// Mean of example_loss over a batch.
template <typename Scalar>
ad::Var<Scalar> batch_loss(ad::Tape<Scalar>& tape, const BoundWeights<Scalar>& w, const ModelConfig& cfg,
                           const TrainBatch<Scalar>& batch, bool oracle_head = false) {
    using ad::operator+;
    if (batch.empty()) throw std::invalid_argument("empty training batch");
    const NoiseSchedule schedule(cfg);
    ad::Var<Scalar> total = example_loss(tape, w, cfg, schedule, batch.front(), oracle_head);
    for (std::size_t i = 1; i < batch.size(); ++i) total = total + example_loss(tape, w, cfg, schedule, batch[i], oracle_head);
    return (Scalar(1) / static_cast<Scalar>(batch.size())) * total;
}

/// Loss value and gradient for every bound tensor.
template <typename Scalar>
std::pair<Scalar, Weights<Scalar>> loss_and_grad(const Weights<Scalar>& weights, const ModelConfig& cfg,
                                                 const TrainBatch<Scalar>& batch, LeafMode mode = LeafMode::kTrainable,
                                                 bool oracle_head = false) {
    ad::Tape<Scalar> tape(true);
    const auto w = bind(tape, weights, cfg, mode);
    const auto loss = batch_loss(tape, w, cfg, batch, oracle_head);
    tape.backward(loss);
    Weights<Scalar> grad = zeros_like(weights);
    std::vector<Matrix<Scalar>*> slots;
    grad.for_each([&](const std::string&, Matrix<Scalar>& m) { slots.push_back(&m); });
    std::size_t i = 0;
    w.for_each([&](const std::string&, const ad::Var<Scalar>& v) {
        *slots[i] = tape.grad(v);
        ++i;
    });
    return {loss.value()(0, 0), std::move(grad)};
}

/// Adam without momentum (beta1 = 0): per-coordinate RMS scaling with bias
/// correction, global gradient-norm clipping and a linear learning-rate
/// decay over the last 30% of steps.
template <typename Scalar>
class RmsOptimizer {
public:
    RmsOptimizer(const Weights<Scalar>& like, double lr, int total_steps)
        : v_(zeros_like(like)), lr_(lr), total_steps_(total_steps) {}

    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    static constexpr double kClip = 1.0;

    [[nodiscard]] double learning_rate() const {
        const double decay_start = 0.7 * total_steps_;
        if (step_ < decay_start || total_steps_ <= 0) return lr_;
        const double frac = (step_ - decay_start) / std::max(1.0, total_steps_ - decay_start);
        return lr_ * std::max(0.05, 1.0 - frac);
    }

    /// Returns the pre-clip gradient norm.
    double update(Weights<Scalar>& w, const Weights<Scalar>& grad, const ModelConfig& cfg) {
        double sq = 0;
        grad.for_each([&](const std::string& name, const Matrix<Scalar>& g) {
            if (is_trainable(name, cfg)) sq += static_cast<double>(g.squaredNorm());
        });
        const double norm = std::sqrt(sq);
        const double clip = norm > kClip ? kClip / norm : 1.0;
        const double lr = learning_rate();
        ++step_;
        const double correction = 1.0 - std::pow(kBeta2, step_);

        std::vector<const Matrix<Scalar>*> gs;
        grad.for_each([&](const std::string&, const Matrix<Scalar>& g) { gs.push_back(&g); });
        std::vector<Matrix<Scalar>*> vs;
        v_.for_each([&](const std::string&, Matrix<Scalar>& v) { vs.push_back(&v); });
        std::size_t i = 0;
        w.for_each([&](const std::string& name, Matrix<Scalar>& p) {
            const std::size_t k = i++;
            if (!is_trainable(name, cfg)) return;
            const Matrix<Scalar> g = static_cast<Scalar>(clip) * *gs[k];
            Matrix<Scalar>& v = *vs[k];
            v = static_cast<Scalar>(kBeta2) * v + static_cast<Scalar>(1 - kBeta2) * g.cwiseProduct(g);
            const auto denom = ((v.array() / static_cast<Scalar>(correction)).sqrt() + static_cast<Scalar>(kEps));
            p.array() -= static_cast<Scalar>(lr) * g.array() / denom;
        });
        return norm;
    }

    [[nodiscard]] int steps_taken() const { return step_; }

private:
    Weights<Scalar> v_;
    double lr_;
    int total_steps_;
    int step_ = 0;
};

/// Thrown when the training loss stops being finite.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StepResult {
    double loss = 0;
    double grad_norm = 0;
};

/// One optimizer update on a batch.
template <typename Scalar>
StepResult train_step(const TrainBatch<Scalar>& batch, Weights<Scalar>& weights, const ModelConfig& cfg,
                      RmsOptimizer<Scalar>& opt) {
    auto [loss, grad] = loss_and_grad(weights, cfg, batch);
    if (!std::isfinite(static_cast<double>(loss))) {
        std::ostringstream msg;
        msg << "non-finite loss " << loss << " at step " << opt.steps_taken() << "; gradient norms:";
        grad.for_each([&](const std::string& name, const Matrix<Scalar>& g) {
            if (!g.allFinite()) msg << ' ' << name << "=nan";
        });
        throw NonFiniteLoss(msg.str());
    }
    const double norm = opt.update(weights, grad, cfg);
    return {static_cast<double>(loss), norm};
}

/// Training options that are phase-dependent.
inline ExampleOptions phase_options(const ModelConfig& cfg, int step) {
    ExampleOptions opt;
    if (cfg.two_phase && step < cfg.train_steps / 2) {
        opt.zero_intensity = true;
        opt.fixed_offset = true;
    }
    return opt;
}

/// Per-step training hook: (step, result, current weights).
using StepHook = std::function<void(int, const StepResult&, const Weights<double>&)>;

/// Full training run from the config seed. Batches come from the
/// ("train", step) stream so runs are reproducible.
inline Weights<double> train_model(const ModelConfig& cfg, const StepHook& hook = {}) {
    require_valid(cfg);
    Weights<double> weights = init_weights<double>(cfg);
    RmsOptimizer<double> opt(weights, cfg.learning_rate, cfg.train_steps);
    const Rng data(cfg.seed, "train");
    for (int step = 0; step < cfg.train_steps; ++step) {
        const auto batch = make_train_batch(cfg, data.child(static_cast<std::uint64_t>(step)), phase_options(cfg, step));
        const StepResult r = train_step(batch, weights, cfg, opt);
        if (hook) hook(step, r, weights);
    }
    return weights;
}

/// Per-group outcome of a finite-difference gradient check.
struct GradGroupReport {
    std::string name;
    double rel_error = 0;
    double analytic_norm = 0;
};

struct GradcheckReport {
    std::vector<GradGroupReport> groups;
    double max_rel_error = 0;
    std::string worst;
    double loss = 0;
};

/// Central differences of the full composed loss against the analytic
/// gradient, every tensor, float64. Relative error per tensor is
/// ||g_a - g_n|| / max(||g_a|| + ||g_n||, floor).
inline GradcheckReport gradcheck(const ModelConfig& cfg, double step = 1e-5, bool oracle_head = false) {
    require_valid(cfg);
    Weights<double> weights = init_weights<double>(cfg);
    // Move away from the symmetric init so every path carries gradient.
    Rng jitter(cfg.seed, "gradcheck-jitter");
    weights.for_each([&](const std::string&, Matrix<double>& m) {
        for (Index i = 0; i < m.size(); ++i) m.data()[i] += 0.05 * jitter.normal();
    });
    const auto batch = make_train_batch(cfg, Rng(cfg.seed, "gradcheck"));
    auto [loss, grad] = loss_and_grad(weights, cfg, batch, LeafMode::kAll, oracle_head);

    auto eval = [&](const Weights<double>& w) {
        ad::Tape<double> tape(false);
        const auto b = bind(tape, w, cfg);
        return batch_loss(tape, b, cfg, batch, oracle_head).value()(0, 0);
    };

    GradcheckReport report;
    report.loss = loss;
    std::vector<Matrix<double>*> params;
    std::vector<std::string> names;
    weights.for_each([&](const std::string& name, Matrix<double>& m) {
        params.push_back(&m);
        names.push_back(name);
    });
    std::vector<const Matrix<double>*> grads;
    grad.for_each([&](const std::string&, const Matrix<double>& g) { grads.push_back(&g); });

    for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix<double>& m = *params[p];
        Matrix<double> numeric(m.rows(), m.cols());
        for (Index i = 0; i < m.size(); ++i) {
            const double orig = m.data()[i];
            m.data()[i] = orig + step;
            const double up = eval(weights);
            m.data()[i] = orig - step;
            const double down = eval(weights);
            m.data()[i] = orig;
            numeric.data()[i] = (up - down) / (2 * step);
        }
        const double an = grads[p]->norm();
        const double diff = (*grads[p] - numeric).norm();
        const double rel = diff / std::max(an + numeric.norm(), 1e-8);
        report.groups.push_back({names[p], rel, an});
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst = names[p];
        }
    }
    return report;
}

} // namespace sinkstream

#endif // SINKSTREAM_TRAINING_HPP
