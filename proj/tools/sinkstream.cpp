// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0
//
// sinkstream: train, generate, verify and benchmark the streaming model.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sinkstream/config.hpp"
#include "sinkstream/evaluation.hpp"
#include "sinkstream/io.hpp"
#include "sinkstream/pipeline.hpp"
#include "sinkstream/training.hpp"
#include "sinkstream/verify.hpp"

namespace {

using namespace sinkstream;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerifyFailed = 2;

/// Thrown for bad user input; reported on stderr with exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> ablations;
};

void add_common(CLI::App* app, Common& c, bool with_config = true) {
    if (with_config) app->add_option("--config", c.config_path, "JSON config file (defaults when omitted)");
    app->add_option("--seed", c.seed, "override the config seed");
    app->add_option("--ablate", c.ablations, "ablation switch")
        ->check(CLI::IsMember({"no-audio-cache", "uni-att", "no-noise", "no-adaln"}));
}

ModelConfig resolve_config(const Common& c, std::optional<ModelConfig> base = std::nullopt) {
    ModelConfig cfg = base ? *base : (c.config_path.empty() ? ModelConfig{} : load_config(c.config_path));
    if (c.seed) cfg.seed = *c.seed;
    for (const auto& a : c.ablations) apply_ablation(cfg, a);
    const auto errors = validate_config(cfg);
    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errors) msg += "\n  violated: " + e;
        throw UsageError(msg);
    }
    return cfg;
}

std::shared_ptr<const Weights<double>> load_weights(const std::string& path, ModelConfig& cfg_out) {
    const Checkpoint ck = read_checkpoint(path);
    cfg_out = ck.config;
    return std::make_shared<const Weights<double>>(cast_weights<double>(ck.weights));
}

// ---- train ----

struct TrainArgs {
    Common common;
    std::string out;
    std::string metrics;
};

int cmd_train(const TrainArgs& a) {
    const ModelConfig cfg = resolve_config(a.common);
    std::ofstream metrics;
    if (!a.metrics.empty()) {
        metrics.open(a.metrics);
        if (!metrics) throw UsageError("cannot write " + a.metrics);
        metrics << "step\tloss\tgrad_norm\tcorrelation\tdrift\n";
    }
    double window_loss = 0;
    int window_n = 0;
    RolloutMetrics last{};
    const auto t0 = std::chrono::steady_clock::now();
    const Weights<double> weights = train_model(cfg, [&](int step, const StepResult& r, const Weights<double>& w) {
        window_loss += r.loss;
        ++window_n;
        const bool eval = cfg.eval_every > 0 && ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.train_steps);
        std::string corr, drift;
        if (eval) {
            last = evaluate_rollouts(std::make_shared<const Weights<double>>(w), cfg);
            corr = std::to_string(last.correlation);
            drift = std::to_string(last.drift);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cerr << "step " << step + 1 << " loss " << window_loss / window_n << " correlation "
                      << last.correlation << " drift " << last.drift << " (" << std::fixed << std::setprecision(1)
                      << secs << " s)\n"
                      << std::defaultfloat;
            window_loss = 0;
            window_n = 0;
        }
        if (metrics) metrics << step + 1 << '\t' << r.loss << '\t' << r.grad_norm << '\t' << corr << '\t' << drift << '\n';
    });
    write_checkpoint(a.out, cfg, cast_weights<float>(weights));
    std::cout << "final_correlation\t" << last.correlation << "\nfinal_drift\t" << last.drift << "\ncheckpoint\t" << a.out
              << "\nconfig_hash\t" << hash_hex(config_hash(cfg)) << "\n";
    return kExitOk;
}

// ---- puppet: synthetic reference and condition stream ----

struct PuppetArgs {
    Common common;
    long long frames = 0;
    std::string reference;
    std::string conditions;
    std::string truth;
};

int cmd_puppet(const PuppetArgs& a) {
    const ModelConfig cfg = resolve_config(a.common);
    const long long T = a.frames > 0 ? a.frames : 3LL * cfg.window();
    if (T < 2) throw UsageError("--frames must be >= 2");
    Rng rng(cfg.seed, "cli-puppet");
    Rng prng = rng.child("puppet");
    const PuppetParams p = make_puppet(cfg, prng);
    Rng srng = rng.child("sequence");
    const PuppetSequence seq = gen_puppet_sequence(p, static_cast<int>(T), srng);
    const std::string hash = hash_hex(config_hash(cfg));

    LatentSequence ref{hash, cfg.S, cfg.D, {seq.frames.front().cast<float>()}};
    write_latents(a.reference, ref);
    std::vector<ConditionRecord> records;
    for (long long t = 2; t <= T; ++t) {
        const auto& c = seq.conditions[static_cast<std::size_t>(t - 1)];
        records.push_back({t, c.intensity, c.audio.cast<float>(), std::nullopt});
    }
    std::ofstream out(a.conditions);
    if (!out) throw UsageError("cannot write " + a.conditions);
    write_condition_stream(out, records);
    if (!a.truth.empty()) {
        LatentSequence truth{hash, cfg.S, cfg.D, {}};
        for (const auto& f : seq.frames) truth.frames.push_back(f.cast<float>());
        write_latents(a.truth, truth);
    }
    std::cout << "frames\t" << T << "\nreference\t" << a.reference << "\nconditions\t" << a.conditions << "\n";
    return kExitOk;
}

// ---- generate / bench ----

struct GenerateArgs {
    Common common;
    std::string checkpoint;
    std::string reference;
    std::string conditions;
    std::string out;
    long long frames = 0;
    bool bench = false;
};

ModelConfig checkpoint_config(const Common& c, const ModelConfig& stored) {
    Common inference = c;
    inference.config_path.clear();
    // Only inference-time switches may change on a trained checkpoint.
    for (const auto& ab : inference.ablations)
        if (ab == "no-noise" || ab == "no-adaln")
            throw UsageError("--ablate " + ab + " is a training-time switch; pass it to train");
    return resolve_config(inference, stored);
}

int cmd_generate(const GenerateArgs& a) {
    ModelConfig stored;
    const auto weights = load_weights(a.checkpoint, stored);
    const ModelConfig cfg = checkpoint_config(a.common, stored);
    if (a.frames < 1) throw UsageError("--frames must be >= 1");

    const LatentSequence ref = read_latents(a.reference);
    if (ref.frames.empty()) throw UsageError("reference file holds no frames");
    if (ref.S != cfg.S || ref.D != cfg.D) throw UsageError("reference frame shape does not match the checkpoint");
    const auto records = read_condition_stream(a.conditions, cfg.A);
    std::map<long long, ConditionRecord> by_frame;
    for (const auto& r : records) by_frame[r.frame] = r;
    const ConditionSource<double> source = [&](long long t) {
        auto it = by_frame.find(t);
        if (it == by_frame.end()) throw UsageError("condition stream: missing frame " + std::to_string(t));
        return resolve_condition(it->second, cfg.A);
    };

    using Clock = std::chrono::steady_clock;
    auto t0 = Clock::now();
    if (a.bench) std::cout << "frame\tms\tposition\tcached_frames\tcache_bytes\tattended_tokens\n";
    const auto frames = generate<double>(weights, cfg, ref.frames.front().cast<double>(), source, a.frames, cfg.seed,
                                         [&](const StepStats& s) {
                                             const auto t1 = Clock::now();
                                             if (a.bench)
                                                 std::cout << s.frame << '\t'
                                                           << std::chrono::duration<double, std::milli>(t1 - t0).count()
                                                           << '\t' << s.position << '\t' << s.cached_frames << '\t'
                                                           << s.cached_bytes << '\t' << s.attended_tokens << '\n';
                                             t0 = Clock::now();
                                         });
    LatentSequence out{hash_hex(config_hash(cfg)), cfg.S, cfg.D, {}};
    for (const auto& f : frames) out.frames.push_back(f.cast<float>());
    write_latents(a.out, out);
    if (!a.bench) std::cout << "frames\t" << frames.size() << "\nout\t" << a.out << "\n";
    return kExitOk;
}

struct BenchArgs {
    Common common;
    std::string checkpoint;
    long long frames = 0;
    int repeats = 5;
};

int cmd_bench(const BenchArgs& a) {
    ModelConfig cfg;
    std::shared_ptr<const Weights<double>> weights;
    if (!a.checkpoint.empty()) {
        ModelConfig stored;
        weights = load_weights(a.checkpoint, stored);
        cfg = checkpoint_config(a.common, stored);
    } else {
        cfg = resolve_config(a.common);
        weights = std::make_shared<const Weights<double>>(random_weights(cfg));
    }
    const long long T = a.frames > 0 ? a.frames : 4LL * cfg.N;
    const HeldOut h = make_held_out(cfg, 1, static_cast<int>(T));
    const auto& seq = h.sequences.front();
    const LatencyProfile p =
        profile_latency<double>(weights, cfg, seq.frames.front(), sequence_source(seq), T, cfg.seed, a.repeats);
    std::cout << "frame\tms\tcached_frames\tcache_bytes\tattended_tokens\n";
    for (std::size_t i = 0; i < p.ms.size(); ++i)
        std::cout << p.stats[i].frame << '\t' << p.ms[i] << '\t' << p.stats[i].cached_frames << '\t'
                  << p.stats[i].cached_bytes << '\t' << p.stats[i].attended_tokens << '\n';
    if (T >= 2 * cfg.N)
        std::cout << "# steady-state deviation (frames N+1..2N vs N): " << 100 * p.steady_state_spread(cfg.N) << "%\n";
    return kExitOk;
}

// ---- verify ----

struct VerifyArgs {
    Common common;
    std::string checkpoint;
    std::vector<std::string> suites;
};

const std::vector<std::string> kSuites = {"posenc", "cache-equiv", "sink", "causality", "partition",
                                          "diffusion", "gradcheck", "drift", "latency"};

int cmd_verify(const VerifyArgs& a) {
    ModelConfig cfg;
    std::shared_ptr<const Weights<double>> weights;
    if (!a.checkpoint.empty()) {
        ModelConfig stored;
        weights = load_weights(a.checkpoint, stored);
        cfg = checkpoint_config(a.common, stored);
    } else {
        cfg = resolve_config(a.common);
    }
    auto need_weights = [&](const std::string& suite) {
        if (weights) return weights;
        if (suite == "drift") throw UsageError("suite drift needs --checkpoint");
        weights = std::make_shared<const Weights<double>>(random_weights(cfg));
        return weights;
    };
    const std::vector<std::string> suites = a.suites.empty() || a.suites == std::vector<std::string>{"all"}
                                                ? std::vector<std::string>{"posenc", "cache-equiv", "sink",
                                                                           "causality", "partition", "diffusion",
                                                                           "gradcheck"}
                                                : a.suites;
    bool all_pass = true;
    for (const auto& s : suites) {
        CheckResult r;
        if (s == "posenc") {
            r = check_position_cycling();
        } else if (s == "cache-equiv") {
            const auto f32 = check_cache_equivalence_f32(cfg, cfg.N);
            const auto f64 = check_cache_equivalence_f64(cfg, cfg.N);
            r = {f32.pass && f64.pass, "float32 " + f32.detail + "; float64 " + f64.detail};
        } else if (s == "sink") {
            r = check_sink_retention(cfg, 10 * cfg.N);
        } else if (s == "causality") {
            r = check_causality(need_weights(s), cfg, 3 * cfg.window(), 5);
        } else if (s == "partition") {
            r = check_partition_law(1000, cfg.seed);
        } else if (s == "diffusion") {
            r = check_diffusion_limits(cfg, 10000);
        } else if (s == "gradcheck") {
            r = check_gradients();
        } else if (s == "drift") {
            r = check_drift_bound(need_weights(s), cfg);
        } else if (s == "latency") {
            r = check_latency(need_weights(s), cfg, 7);
        } else {
            throw UsageError("unknown suite '" + s + "'");
        }
        std::cout << (r.pass ? "PASS" : "FAIL") << '\t' << s << '\t' << r.detail << '\n';
        all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : kExitVerifyFailed;
}

int cmd_config(const Common& c) {
    std::cout << to_json(resolve_config(c));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sinkstream: streaming frame-autoregressive latent generation"};
    app.require_subcommand(1);

    Common config_args;
    auto* config = app.add_subcommand("config", "print the resolved config as JSON");
    add_common(config, config_args);

    TrainArgs train;
    auto* tr = app.add_subcommand("train", "train on synthetic puppet data and write a checkpoint");
    add_common(tr, train.common);
    tr->add_option("--out,-o", train.out, "checkpoint path")->required();
    tr->add_option("--metrics", train.metrics, "tab-separated per-step metrics log");

    PuppetArgs puppet;
    auto* pp = app.add_subcommand("puppet", "write a synthetic reference latent and condition stream");
    add_common(pp, puppet.common);
    pp->add_option("--frames", puppet.frames, "frames including the reference");
    pp->add_option("--reference", puppet.reference, "reference latent file")->required();
    pp->add_option("--conditions", puppet.conditions, "condition stream file")->required();
    pp->add_option("--truth", puppet.truth, "also write the ground-truth frames");

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "stream T frames from a reference and a condition stream");
    add_common(g, gen.common, false);
    g->add_option("--checkpoint", gen.checkpoint)->required();
    g->add_option("--reference", gen.reference, "latent file; its first frame is the reference")->required();
    g->add_option("--conditions", gen.conditions, "condition stream file")->required();
    g->add_option("--frames", gen.frames, "frames to produce, reference included")->required();
    g->add_option("--out,-o", gen.out, "output latent file")->required();
    g->add_flag("--bench", gen.bench, "print per-frame latency and cache stats");

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "per-frame latency, cached frames and attended tokens");
    add_common(b, bench.common);
    b->add_option("--checkpoint", bench.checkpoint, "trained weights (random weights when omitted)");
    b->add_option("--frames", bench.frames, "frames to stream");
    b->add_option("--repeats", bench.repeats, "sessions timed; the minimum per frame is reported");

    VerifyArgs verify;
    auto* v = app.add_subcommand("verify", "run property suites; exit 2 if any fails");
    add_common(v, verify.common);
    v->add_option("--checkpoint", verify.checkpoint, "trained weights for causality/drift/latency");
    v->add_option("suites", verify.suites, "suites to run (default: all weight-free suites)")
        ->check(CLI::IsMember([] {
            auto s = kSuites;
            s.push_back("all");
            return s;
        }()));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*config) return cmd_config(config_args);
        if (*tr) return cmd_train(train);
        if (*pp) return cmd_puppet(puppet);
        if (*g) return cmd_generate(gen);
        if (*b) return cmd_bench(bench);
        if (*v) return cmd_verify(verify);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
