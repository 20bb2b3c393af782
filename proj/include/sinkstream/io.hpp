// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SINKSTREAM_IO_HPP
#define SINKSTREAM_IO_HPP

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "sinkstream/config.hpp"
#include "sinkstream/parameters.hpp"
#include "sinkstream/types.hpp"

namespace sinkstream {

/// Checkpoint layout, all integers little-endian:
///
///   magic "SNKCKPT1" (8 bytes)
///   u32 version (1)
///   u64 config hash
///   u32 config JSON length, then the JSON bytes
///   u32 block count
///   per block: u32 name length, name bytes, u32 rows, u32 cols,
///              rows*cols f32 values in row-major order
struct Checkpoint {
    ModelConfig config;
    Weights<float> weights;
};

void write_checkpoint(const std::string& path, const ModelConfig& cfg, const Weights<float>& weights);
Checkpoint read_checkpoint(const std::string& path);

/// Latent sequence: raw little-endian f32 payload in (t, s, d) order at
/// `path`, with a JSON sidecar at `path + ".json"` holding
/// {config_hash, T, S, D, dtype: "f32", endianness: "little"}.
struct LatentSequence {
    std::string config_hash;
    int S = 0;
    int D = 0;
    std::vector<Matrix<float>> frames;
};

void write_latents(const std::string& path, const LatentSequence& seq);
LatentSequence read_latents(const std::string& path);

/// One line of a condition stream file: `frame,intensity,a_1,...,a_A` or
/// `frame,intensity,seed:<u64>` for synthetic standard-normal audio.
/// Blank lines and lines starting with '#' are ignored.
struct ConditionRecord {
    long long frame = 0;
    double intensity = 0;
    std::optional<Vector<float>> audio;
    std::optional<std::uint64_t> seed;
};

/// Parses and validates the whole stream: frames strictly increasing from 1
/// (frame 1 may be omitted), A audio values per line.
std::vector<ConditionRecord> parse_condition_stream(std::istream& in, int A);
std::vector<ConditionRecord> read_condition_stream(const std::string& path, int A);
void write_condition_stream(std::ostream& out, const std::vector<ConditionRecord>& records);

/// Condition for a record; seed directives expand deterministically.
ConditionFrame<double> resolve_condition(const ConditionRecord& record, int A);

} // namespace sinkstream

#endif // SINKSTREAM_IO_HPP
