#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace alf {

// Error taxonomy shared across the library. The CLI maps these to exit codes.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct DecodeError : std::runtime_error {
    explicit DecodeError(const std::string& msg) : std::runtime_error("decode error: " + msg) {}
};

// FNV-1a over arbitrary bytes; used for content addresses and checkpoint hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
    return fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(std::uint64_t h);

}  // namespace alf
