// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace advsdg {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a. Stable across runs and platforms; used for parameter and config hashes.
class Fnv1a {
public:
    void update(const void* bytes, std::size_t count) noexcept {
        const auto* p = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < count; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) noexcept { update(s.data(), s.size()); }
    template <typename T>
    void update_values(std::span<const T> values) noexcept {
        update(values.data(), values.size_bytes());
    }
    [[nodiscard]] std::uint64_t digest() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view s) noexcept {
    Fnv1a h;
    h.update(s);
    return h.digest();
}

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for a named stream under a root seed, e.g.
/// substream(seed, "style", step). Every random draw in the library flows
/// through one of these so that runs replay exactly.
inline Rng substream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
    const std::uint64_t a = splitmix64(root ^ fnv1a(name));
    const std::uint64_t b = splitmix64(a + splitmix64(index));
    std::seed_seq seq{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32)};
    return Rng(seq);
}

}  // namespace advsdg
