#pragma once

// Checkpoint files: a text header terminated by a line `end_header`, then the
// flat parameter vector as little-endian IEEE-754 binary64 in declaration
// order.
//
//   gdiff-checkpoint 1
//   kind: denoiser | classifier
//   architecture: input_dim=.. width=.. hidden_layers=.. group_size=.. embed_dim=..
//                 output_dim=.. num_classes=.. normalize=.. activation=..   (one line)
//   schedule: <linear|cosine> <T>
//   training_steps: <n>
//   parameter_count: <n>
//   end_header

#include "gdiff/harness/io.hpp"
#include "gdiff/mlp.hpp"
#include "gdiff/schedules.hpp"

#include <bit>
#include <cstring>
#include <map>

namespace gdiff::io {

inline constexpr int kCheckpointVersion = 1;

enum class CheckpointKind { denoiser, classifier };

inline std::string to_string(CheckpointKind k) { return k == CheckpointKind::denoiser ? "denoiser" : "classifier"; }

struct Checkpoint {
    CheckpointKind kind = CheckpointKind::denoiser;
    MlpArchitecture architecture;
    ScheduleSpec schedule;
    long long training_steps = 0;
    std::vector<double> params;
};

inline std::string encode_checkpoint(const Checkpoint& c) {
    require(c.params.size() == MlpLayout(c.architecture).total, "checkpoint parameter count does not match architecture");
    std::string s = "gdiff-checkpoint " + std::to_string(kCheckpointVersion) + "\n";
    s += "kind: " + to_string(c.kind) + "\n";
    s += "architecture: " + c.architecture.describe() + "\n";
    s += "schedule: " + to_string(c.schedule.family) + " " + std::to_string(c.schedule.steps) + "\n";
    s += "training_steps: " + std::to_string(c.training_steps) + "\n";
    s += "parameter_count: " + std::to_string(c.params.size()) + "\n";
    s += "end_header\n";
    const std::size_t start = s.size();
    s.resize(start + 8 * c.params.size());
    for (std::size_t i = 0; i < c.params.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(c.params[i]);
        for (int b = 0; b < 8; ++b) s[start + 8 * i + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    return s;
}

namespace detail {

inline int parse_int_field(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw IoError("checkpoint architecture lacks '" + key + "'");
    try {
        std::size_t used = 0;
        const int v = std::stoi(it->second, &used);
        if (used == it->second.size()) return v;
    } catch (const std::exception&) {
    }
    throw IoError("checkpoint architecture field '" + key + "' is not an integer");
}

inline MlpArchitecture parse_architecture(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw IoError("malformed architecture token '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    MlpArchitecture a;
    a.input_dim = parse_int_field(kv, "input_dim");
    a.width = parse_int_field(kv, "width");
    a.hidden_layers = parse_int_field(kv, "hidden_layers");
    a.group_size = parse_int_field(kv, "group_size");
    a.embed_dim = parse_int_field(kv, "embed_dim");
    a.output_dim = parse_int_field(kv, "output_dim");
    a.num_classes = parse_int_field(kv, "num_classes");
    a.normalize = parse_int_field(kv, "normalize") != 0;
    a.activation = parse_int_field(kv, "activation") != 0;
    try {
        a.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(std::string("checkpoint architecture invalid: ") + e.what());
    }
    return a;
}

}  // namespace detail

inline Checkpoint decode_checkpoint(const std::string& bytes) {
    const std::string terminator = "end_header\n";
    const auto end = bytes.find(terminator);
    if (end == std::string::npos) throw IoError("checkpoint header is not terminated");
    std::istringstream in(bytes.substr(0, end));
    std::string line;
    std::getline(in, line);
    if (line != "gdiff-checkpoint " + std::to_string(kCheckpointVersion))
        throw IoError("unsupported checkpoint header '" + line + "'");
    std::map<std::string, std::string> fields;
    while (std::getline(in, line)) {
        const auto colon = line.find(": ");
        if (colon == std::string::npos) throw IoError("malformed checkpoint header line '" + line + "'");
        fields[line.substr(0, colon)] = line.substr(colon + 2);
    }
    for (const char* key : {"kind", "architecture", "schedule", "training_steps", "parameter_count"})
        if (!fields.count(key)) throw IoError(std::string("checkpoint header lacks '") + key + "'");

    Checkpoint c;
    if (fields["kind"] == "denoiser")
        c.kind = CheckpointKind::denoiser;
    else if (fields["kind"] == "classifier")
        c.kind = CheckpointKind::classifier;
    else
        throw IoError("unknown checkpoint kind '" + fields["kind"] + "'");
    c.architecture = detail::parse_architecture(fields["architecture"]);
    {
        std::istringstream s(fields["schedule"]);
        std::string family;
        if (!(s >> family >> c.schedule.steps) || c.schedule.steps < 1) throw IoError("malformed schedule field");
        try {
            c.schedule.family = parse_schedule_family(family);
        } catch (const std::invalid_argument& e) {
            throw IoError(e.what());
        }
    }
    c.training_steps = std::stoll(fields["training_steps"]);
    const std::size_t count = std::stoull(fields["parameter_count"]);
    if (count != MlpLayout(c.architecture).total) throw IoError("checkpoint parameter count does not match architecture");
    const std::size_t start = end + terminator.size();
    if (bytes.size() != start + 8 * count)
        throw IoError("checkpoint payload has " + std::to_string(bytes.size() - start) + " bytes, expected " +
                      std::to_string(8 * count));
    c.params.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[start + 8 * i + static_cast<std::size_t>(b)]))
                    << (8 * b);
        c.params[i] = std::bit_cast<double>(bits);
    }
    return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    write_file(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<CheckpointKind> expect = std::nullopt) {
    Checkpoint c = decode_checkpoint(read_file(path));
    if (expect && c.kind != *expect)
        throw IoError("'" + path.string() + "' is a " + to_string(c.kind) + " checkpoint, expected " + to_string(*expect));
    return c;
}

inline MlpNetwork network_from(const Checkpoint& c) {
    MlpNetwork net(c.architecture);
    net.params() = c.params;
    return net;
}

}  // namespace gdiff::io
