// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#include "sinkstream/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace sinkstream {

namespace {

using Json = nlohmann::ordered_json;

const char* variant_name(MaskVariant v) { return v == MaskVariant::kFull ? "full" : "uni-att"; }

template <typename T>
void read(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

MaskVariant parse_mask_variant(const std::string& name) {
    if (name == "full") return MaskVariant::kFull;
    if (name == "uni-att") return MaskVariant::kUniAtt;
    throw std::invalid_argument("unknown mask_variant '" + name + "'");
}

std::vector<std::string> validate_config(const ModelConfig& c) {
    std::vector<std::string> errors;
    auto positive = [&](int v, const char* name) {
        if (v <= 0) errors.push_back(std::string(name) + " > 0");
    };
    positive(c.D, "D");
    positive(c.S, "S");
    positive(c.A, "A");
    positive(c.K, "K");
    positive(c.L, "L");
    positive(c.H, "H");
    positive(c.T_diff_train, "T_diff_train");
    positive(c.T_diff_sample, "T_diff_sample");
    positive(c.B_int, "B_int");
    positive(c.mlp_ratio, "mlp_ratio");
    positive(c.mar_layers, "mar_layers");
    positive(c.head_width, "head_width");
    positive(c.train_steps, "train_steps");
    positive(c.batch_size, "batch_size");
    positive(c.diffusion_repeats, "diffusion_repeats");
    positive(c.eval_every, "eval_every");
    if (c.N < 2) errors.emplace_back("N >= 2");
    if (c.K > c.S) errors.emplace_back("K <= S");
    if (c.H > 0 && c.D % c.H != 0) errors.emplace_back("H divides D");
    if (c.T_diff_sample > c.T_diff_train) errors.emplace_back("T_diff_sample <= T_diff_train");
    if (!(c.intensity_bin_width > 0)) errors.emplace_back("intensity_bin_width > 0");
    if (!(c.beta_start > 0 && c.beta_start < c.beta_end && c.beta_end < 1))
        errors.emplace_back("0 < beta_start < beta_end < 1");
    if (c.train_window < 0 || c.train_window > c.N) errors.emplace_back("0 <= train_window <= N");
    if (c.window() < 2) errors.emplace_back("train_window >= 2");
    if (!(c.learning_rate > 0)) errors.emplace_back("learning_rate > 0");
    if (!(c.mask_ratio_min > 0 && c.mask_ratio_min <= 1)) errors.emplace_back("0 < mask_ratio_min <= 1");
    if (c.gamma_max < 0) errors.emplace_back("gamma_max >= 0");
    if (!(c.puppet_rho >= 0 && c.puppet_rho < 1)) errors.emplace_back("0 <= puppet_rho < 1");
    if (!(c.puppet_control_phi >= 0 && c.puppet_control_phi < 1))
        errors.emplace_back("0 <= puppet_control_phi < 1");
    if (c.puppet_audio_noise < 0) errors.emplace_back("puppet_audio_noise >= 0");
    if (c.puppet_emission_noise < 0) errors.emplace_back("puppet_emission_noise >= 0");
    return errors;
}

void require_valid(const ModelConfig& cfg) {
    auto errors = validate_config(cfg);
    if (errors.empty()) return;
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += " [" + e + "]";
    throw std::invalid_argument(msg);
}

std::string to_json(const ModelConfig& c) {
    Json j;
    j["D"] = c.D;
    j["S"] = c.S;
    j["A"] = c.A;
    j["N"] = c.N;
    j["K"] = c.K;
    j["L"] = c.L;
    j["H"] = c.H;
    j["T_diff_train"] = c.T_diff_train;
    j["T_diff_sample"] = c.T_diff_sample;
    j["B_int"] = c.B_int;
    j["seed"] = c.seed;
    j["mlp_ratio"] = c.mlp_ratio;
    j["mar_layers"] = c.mar_layers;
    j["head_width"] = c.head_width;
    j["intensity_bin_width"] = c.intensity_bin_width;
    j["beta_start"] = c.beta_start;
    j["beta_end"] = c.beta_end;
    j["audio_cache"] = c.audio_cache;
    j["mask_variant"] = variant_name(c.mask_variant);
    j["input_noise"] = c.input_noise;
    j["adaln_sink"] = c.adaln_sink;
    j["fixed_plan"] = c.fixed_plan;
    j["train_window"] = c.train_window;
    j["train_steps"] = c.train_steps;
    j["batch_size"] = c.batch_size;
    j["diffusion_repeats"] = c.diffusion_repeats;
    j["learning_rate"] = c.learning_rate;
    j["mask_ratio_min"] = c.mask_ratio_min;
    j["gamma_max"] = c.gamma_max;
    j["tune_position_table"] = c.tune_position_table;
    j["two_phase"] = c.two_phase;
    j["eval_every"] = c.eval_every;
    j["puppet_rho"] = c.puppet_rho;
    j["puppet_control_phi"] = c.puppet_control_phi;
    j["puppet_audio_noise"] = c.puppet_audio_noise;
    j["puppet_emission_noise"] = c.puppet_emission_noise;
    return j.dump(2) + "\n";
}

ModelConfig config_from_json(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");

    ModelConfig c;
    const Json known = Json::parse(to_json(c));
    for (const auto& item : j.items()) {
        if (!known.contains(item.key())) throw std::invalid_argument("unknown config key '" + item.key() + "'");
    }
    try {
        read(j, "D", c.D);
        read(j, "S", c.S);
        read(j, "A", c.A);
        read(j, "N", c.N);
        read(j, "K", c.K);
        read(j, "L", c.L);
        read(j, "H", c.H);
        read(j, "T_diff_train", c.T_diff_train);
        read(j, "T_diff_sample", c.T_diff_sample);
        read(j, "B_int", c.B_int);
        read(j, "seed", c.seed);
        read(j, "mlp_ratio", c.mlp_ratio);
        read(j, "mar_layers", c.mar_layers);
        read(j, "head_width", c.head_width);
        read(j, "intensity_bin_width", c.intensity_bin_width);
        read(j, "beta_start", c.beta_start);
        read(j, "beta_end", c.beta_end);
        read(j, "audio_cache", c.audio_cache);
        if (j.contains("mask_variant")) c.mask_variant = parse_mask_variant(j.at("mask_variant").get<std::string>());
        read(j, "input_noise", c.input_noise);
        read(j, "adaln_sink", c.adaln_sink);
        read(j, "fixed_plan", c.fixed_plan);
        read(j, "train_window", c.train_window);
        read(j, "train_steps", c.train_steps);
        read(j, "batch_size", c.batch_size);
        read(j, "diffusion_repeats", c.diffusion_repeats);
        read(j, "learning_rate", c.learning_rate);
        read(j, "mask_ratio_min", c.mask_ratio_min);
        read(j, "gamma_max", c.gamma_max);
        read(j, "tune_position_table", c.tune_position_table);
        read(j, "two_phase", c.two_phase);
        read(j, "eval_every", c.eval_every);
        read(j, "puppet_rho", c.puppet_rho);
        read(j, "puppet_control_phi", c.puppet_control_phi);
        read(j, "puppet_audio_noise", c.puppet_audio_noise);
        read(j, "puppet_emission_noise", c.puppet_emission_noise);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config type error: ") + e.what());
    }
    return c;
}

ModelConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

void save_config(const ModelConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write config '" + path + "'");
    out << to_json(cfg);
}

std::uint64_t config_hash(const ModelConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json(cfg)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t hash) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

void apply_ablation(ModelConfig& cfg, const std::string& name) {
    if (name == "no-audio-cache") {
        cfg.audio_cache = false;
    } else if (name == "uni-att") {
        cfg.mask_variant = MaskVariant::kUniAtt;
    } else if (name == "no-noise") {
        cfg.input_noise = false;
    } else if (name == "no-adaln") {
        cfg.adaln_sink = false;
    } else {
        throw std::invalid_argument("unknown ablation '" + name + "'");
    }
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.D = 4;
    c.S = 4;
    c.A = 3;
    c.N = 2;
    c.K = 2;
    c.L = 2;
    c.H = 2;
    c.B_int = 8;
    c.head_width = 6;
    c.mar_layers = 2;
    c.T_diff_train = 50;
    c.T_diff_sample = 4;
    c.batch_size = 1;
    c.diffusion_repeats = 2;
    return c;
}

} // namespace sinkstream
