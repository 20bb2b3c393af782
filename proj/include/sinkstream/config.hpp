// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_CONFIG_HPP
#define SINKSTREAM_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace sinkstream {

/// Attention mask variant between a frame's condition and visual tokens.
enum class MaskVariant { kFull, kUniAtt };

/// "full" or "uni-att".
MaskVariant parse_mask_variant(const std::string& name);

/// Model, sampler, training and synthetic-data settings.
///
/// The first block of fields carries the architectural names used in the
/// config file verbatim (D, S, A, ...). Everything below it has a default
/// sized for the desk-scale toy run.
struct ModelConfig {
    int D = 16;              // token dimension
    int S = 16;              // spatial tokens per frame
    int A = 8;               // audio-analog embedding dimension
    int N = 4;               // attention window in latent frames (sink included)
    int K = 4;               // masked-AR group count
    int L = 4;               // frame-causal transformer layers
    int H = 4;               // attention heads
    int T_diff_train = 1000; // diffusion timesteps at training
    int T_diff_sample = 8;   // sampler steps
    int B_int = 64;          // motion-intensity bins
    std::uint64_t seed = 7;

    // architecture
    int mlp_ratio = 2;
    int mar_layers = 2;
    int head_width = 64;
    double intensity_bin_width = 0.04;
    double beta_start = 1e-4;
    double beta_end = 2e-2;

    // ablation switches
    bool audio_cache = true;
    MaskVariant mask_variant = MaskVariant::kFull;
    bool input_noise = true;
    bool adaln_sink = true;

    // inference
    bool fixed_plan = false;

    // training
    int train_window = 0; // 0 means N
    int train_steps = 4000;
    int batch_size = 8;
    int diffusion_repeats = 4;
    double learning_rate = 3e-3;
    double mask_ratio_min = 0.7;
    double gamma_max = 0.1;
    bool tune_position_table = false;
    bool two_phase = false;
    int eval_every = 250;

    // synthetic puppet data
    double puppet_rho = 0.3;
    double puppet_control_phi = 0.6;
    double puppet_audio_noise = 0.6;
    double puppet_emission_noise = 0.02;

    /// Number of rows in the cyclic position table (2N - 1).
    [[nodiscard]] int table_size() const { return 2 * N - 1; }
    /// Condition tokens per frame: audio and intensity.
    [[nodiscard]] static constexpr int condition_tokens() { return 2; }
    [[nodiscard]] int frame_tokens() const { return condition_tokens() + S; }
    [[nodiscard]] int window() const { return train_window > 0 ? train_window : N; }
    [[nodiscard]] int head_dim() const { return D / H; }
};

/// Returns one message per violated invariant; empty means the config is valid.
std::vector<std::string> validate_config(const ModelConfig& cfg);

/// Throws std::invalid_argument listing every violation.
void require_valid(const ModelConfig& cfg);

/// Canonical JSON text. Keys match the field names above.
std::string to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& text);

ModelConfig load_config(const std::string& path);
void save_config(const ModelConfig& cfg, const std::string& path);

/// FNV-1a 64 of the canonical JSON text.
std::uint64_t config_hash(const ModelConfig& cfg);
std::string hash_hex(std::uint64_t hash);

/// Applies a named ablation ("no-audio-cache", "uni-att", "no-noise", "no-adaln").
/// Throws std::invalid_argument on an unknown name.
void apply_ablation(ModelConfig& cfg, const std::string& name);

/// Tiny float64 configuration used for gradient checks.
ModelConfig tiny_config();

} // namespace sinkstream

#endif // SINKSTREAM_CONFIG_HPP
