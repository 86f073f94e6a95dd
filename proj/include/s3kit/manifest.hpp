#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "s3kit/errors.hpp"

namespace s3kit {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a over a byte buffer; the content hash recorded in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= bytes[i];
        hash *= 0x100000001b3ull;
    }
    return hash;
}

inline std::string digest_hex(std::uint64_t hash) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for digesting");
    std::vector<char> buffer(1 << 16);
    std::uint64_t hash = 0xcbf29ce484222325ull;
    while (in) {
        in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buffer[static_cast<std::size_t>(i)]);
            hash *= 0x100000001b3ull;
        }
    }
    return digest_hex(hash);
}

// Reproducibility record written next to every CLI output.
struct RunManifest {
    std::string subcommand;
    nlohmann::ordered_json resolved_config;
    std::map<std::string, std::string> input_digests;
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
    std::string timestamp;
};

inline std::string utc_timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

inline void write_manifest(const RunManifest& manifest, const std::string& path) {
    nlohmann::ordered_json j;
    j["subcommand"] = manifest.subcommand;
    j["config"] = manifest.resolved_config;
    j["inputs"] = manifest.input_digests;
    j["seed"] = manifest.seed;
    j["tool_version"] = manifest.tool_version;
    j["timestamp"] = manifest.timestamp;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

}  // namespace s3kit
