// Copyright 2026 The sinkstream Authors
// SPDX-License-Identifier: Apache-2.0

#include "sinkstream/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "sinkstream/rng.hpp"

namespace sinkstream {

namespace {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

constexpr char kMagic[8] = {'S', 'N', 'K', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("truncated checkpoint at " + what);
    return v;
}

std::string get_string(std::istream& in, const std::string& what) {
    const auto n = get<std::uint32_t>(in, what + " length");
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw std::runtime_error("truncated checkpoint at " + what);
    return s;
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

void write_checkpoint(const std::string& path, const ModelConfig& cfg, const Weights<float>& weights) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, config_hash(cfg));
    put_string(out, to_json(cfg));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(
                                [&] {
                                    std::size_t n = 0;
                                    weights.for_each([&](const std::string&, const Matrix<float>&) { ++n; });
                                    return n;
                                }()));
    weights.for_each([&](const std::string& name, const Matrix<float>& m) {
        put_string(out, name);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) put<float>(out, m(r, c));
    });
    if (!out) throw std::runtime_error("failed writing " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw std::runtime_error(path + " is not a checkpoint");
    if (get<std::uint32_t>(in, "version") != kVersion) throw std::runtime_error("unsupported checkpoint version");
    const auto hash = get<std::uint64_t>(in, "config hash");
    Checkpoint ck;
    ck.config = config_from_json(get_string(in, "config"));
    if (config_hash(ck.config) != hash) throw std::runtime_error("checkpoint config hash mismatch");

    // Shapes come from a fresh init of the stored config.
    ck.weights = zeros_like(init_weights<float>(ck.config));
    const auto count = get<std::uint32_t>(in, "block count");
    std::size_t expected = 0;
    ck.weights.for_each([&](const std::string&, const Matrix<float>&) { ++expected; });
    if (count != expected) throw std::runtime_error("checkpoint block count does not match its config");
    ck.weights.for_each([&](const std::string& name, Matrix<float>& m) {
        const std::string stored = get_string(in, "block name");
        if (stored != name) throw std::runtime_error("checkpoint block '" + stored + "' where '" + name + "' expected");
        const auto rows = get<std::uint32_t>(in, name + " rows");
        const auto cols = get<std::uint32_t>(in, name + " cols");
        if (rows != m.rows() || cols != m.cols()) throw std::runtime_error("checkpoint block " + name + " has wrong shape");
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) m(r, c) = get<float>(in, name);
    });
    return ck;
}

void write_latents(const std::string& path, const LatentSequence& seq) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& f : seq.frames) {
        if (f.rows() != seq.S || f.cols() != seq.D) throw std::invalid_argument("latent frame shape mismatch");
        for (Index s = 0; s < f.rows(); ++s)
            for (Index d = 0; d < f.cols(); ++d) put<float>(out, f(s, d));
    }
    nlohmann::ordered_json j;
    j["config_hash"] = seq.config_hash;
    j["T"] = seq.frames.size();
    j["S"] = seq.S;
    j["D"] = seq.D;
    j["dtype"] = "f32";
    j["endianness"] = "little";
    std::ofstream side(path + ".json");
    side << j.dump(2) << "\n";
    if (!out || !side) throw std::runtime_error("failed writing " + path);
}

LatentSequence read_latents(const std::string& path) {
    std::ifstream side(path + ".json");
    if (!side) throw std::runtime_error("missing sidecar " + path + ".json");
    nlohmann::json j;
    try {
        side >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("bad sidecar " + path + ".json: " + e.what());
    }
    if (j.value("dtype", "") != "f32" || j.value("endianness", "") != "little")
        throw std::runtime_error("latent file must be little-endian f32");
    LatentSequence seq;
    seq.config_hash = j.value("config_hash", "");
    const long long T = j.at("T").get<long long>();
    seq.S = j.at("S").get<int>();
    seq.D = j.at("D").get<int>();
    if (T < 0 || seq.S <= 0 || seq.D <= 0) throw std::runtime_error("bad latent dimensions in sidecar");

    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open " + path);
    const auto bytes = static_cast<long long>(in.tellg());
    if (bytes != T * seq.S * seq.D * 4)
        throw std::runtime_error("latent payload is " + std::to_string(bytes) + " bytes, sidecar implies " +
                                 std::to_string(T * seq.S * seq.D * 4));
    in.seekg(0);
    for (long long t = 0; t < T; ++t) {
        Matrix<float> f(seq.S, seq.D);
        for (Index s = 0; s < seq.S; ++s)
            for (Index d = 0; d < seq.D; ++d) f(s, d) = get<float>(in, "latent payload");
        seq.frames.push_back(std::move(f));
    }
    return seq;
}

std::vector<ConditionRecord> parse_condition_stream(std::istream& in, int A) {
    std::vector<ConditionRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto fail = [&](const std::string& why) {
            throw std::runtime_error("condition stream line " + std::to_string(lineno) + ": " + why);
        };
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(trim(f));
        if (fields.size() < 3) fail("expected frame,intensity,audio...");
        ConditionRecord r;
        try {
            std::size_t used = 0;
            r.frame = std::stoll(fields[0], &used);
            if (used != fields[0].size()) fail("bad frame index");
            r.intensity = std::stod(fields[1], &used);
            if (used != fields[1].size()) fail("bad intensity");
            if (fields[2].rfind("seed:", 0) == 0) {
                if (fields.size() != 3) fail("seed directive takes no audio values");
                r.seed = std::stoull(fields[2].substr(5), &used);
                if (used != fields[2].size() - 5) fail("bad seed");
            } else {
                if (static_cast<int>(fields.size()) - 2 != A)
                    fail("expected " + std::to_string(A) + " audio values, got " + std::to_string(fields.size() - 2));
                Vector<float> a(A);
                for (int i = 0; i < A; ++i) {
                    a(i) = std::stof(fields[static_cast<std::size_t>(i + 2)], &used);
                    if (used != fields[static_cast<std::size_t>(i + 2)].size()) fail("bad audio value");
                }
                r.audio = a;
            }
        } catch (const std::logic_error&) {
            fail("unparsable number");
        }
        if (!(r.intensity >= 0)) fail("intensity must be >= 0");
        if (r.frame < 1) fail("frame indices start at 1");
        if (!records.empty() && r.frame <= records.back().frame) fail("frame indices must increase");
        records.push_back(std::move(r));
    }
    // Frames must be consecutive from 1 (frame 1 optional: the reference uses a null audio token).
    long long expect = !records.empty() && records.front().frame == 1 ? 1 : 2;
    for (const auto& r : records) {
        if (r.frame != expect) throw std::runtime_error("condition stream: missing frame " + std::to_string(expect));
        ++expect;
    }
    return records;
}

std::vector<ConditionRecord> read_condition_stream(const std::string& path, int A) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open condition stream " + path);
    return parse_condition_stream(in, A);
}

void write_condition_stream(std::ostream& out, const std::vector<ConditionRecord>& records) {
    out << "# frame,intensity,audio\n";
    out.precision(9);
    for (const auto& r : records) {
        out << r.frame << ',' << r.intensity;
        if (r.seed) {
            out << ",seed:" << *r.seed;
        } else if (r.audio) {
            for (Index i = 0; i < r.audio->size(); ++i) out << ',' << (*r.audio)(i);
        }
        out << '\n';
    }
}

ConditionFrame<double> resolve_condition(const ConditionRecord& record, int A) {
    ConditionFrame<double> c;
    c.intensity = record.intensity;
    if (record.audio) {
        c.audio = record.audio->cast<double>();
    } else {
        Rng rng(record.seed.value_or(0), "condition-audio");
        c.audio.resize(A);
        for (int i = 0; i < A; ++i) c.audio(i) = rng.normal();
    }
    return c;
}

} // namespace sinkstream
