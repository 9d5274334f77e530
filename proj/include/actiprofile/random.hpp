#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace actiprofile {

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derives an independent stream seed from a root seed and a list of keys.
/// Streams depend only on their keys, never on the order they are requested in.
class SeedSeq {
public:
    constexpr explicit SeedSeq(std::uint64_t root) noexcept : state_(mix64(root)) {}

    constexpr SeedSeq with(std::uint64_t key) const noexcept {
        SeedSeq s = *this;
        s.state_ = mix64(s.state_ ^ mix64(key + 0x632be59bd9b4e019ULL));
        return s;
    }
    constexpr SeedSeq with(std::string_view key) const noexcept { return with(fnv1a64(key)); }

    constexpr std::uint64_t value() const noexcept { return state_; }
    std::mt19937_64 engine() const { return std::mt19937_64(state_); }

private:
    std::uint64_t state_;
};

} // namespace actiprofile
