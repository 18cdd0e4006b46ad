#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace twinwatch {

/// Deterministic derivation of independent random streams from a root seed
/// and a chain of identifiers (run id, replication index, channel name).
/// Streams with different chains are statistically independent; the same
/// chain always yields the same engine state.
class StreamKey {
public:
    explicit StreamKey(std::uint64_t root) : state_(mix(0x9e3779b97f4a7c15ull ^ root)) {}

    StreamKey with(std::uint64_t component) const {
        StreamKey k = *this;
        k.state_ = mix(k.state_ ^ mix(component + 0x2545f4914f6cdd1dull));
        return k;
    }

    StreamKey with(std::string_view label) const {
        std::uint64_t h = 0xcbf29ce484222325ull; // FNV-1a
        for (unsigned char c : label) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return with(h);
    }

    std::mt19937_64 engine() const { return std::mt19937_64(state_); }

private:
    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

} // namespace twinwatch
