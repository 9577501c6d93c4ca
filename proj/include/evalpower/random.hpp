#pragma once

// Seed derivation for reproducible parallel work.
//
// Every independent unit of work (simulation trial, SHR trial, permutation
// chunk) gets its own stream keyed by (root seed, stream ids), so results do
// not depend on which worker ran which unit.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace evalpower {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> ids) noexcept {
    std::uint64_t h = splitmix64(root);
    for (auto id : ids) h = splitmix64(h ^ splitmix64(id + 0x632BE59BD9B4E019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> ids) {
    return Rng(derive_seed(root, ids));
}

// Stateless 64-bit word generator: word j of stream k.
constexpr std::uint64_t counter_word(std::uint64_t key, std::uint64_t stream, std::uint64_t j) noexcept {
    return splitmix64(key ^ splitmix64(stream * 0xD1B54A32D192ED03ULL + j));
}

} // namespace evalpower
