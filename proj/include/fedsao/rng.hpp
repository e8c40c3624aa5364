#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedsao {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Mixes a root seed with stream tags (device id, round, purpose) into an
// independent seed. Every random stream in the simulator goes through this.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = splitmix64(root);
    for (auto t : tags) s = splitmix64(s ^ splitmix64(t + 0x632be59bd9b4e019ULL));
    return s;
}

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> tags = {}) {
    return Rng(derive_seed(root, tags));
}

// Purpose tags for derive_seed.
namespace stream {
inline constexpr std::uint64_t placement = 1;
inline constexpr std::uint64_t shadowing = 2;
inline constexpr std::uint64_t budgets = 3;
inline constexpr std::uint64_t dataset = 4;
inline constexpr std::uint64_t partition = 5;
inline constexpr std::uint64_t model_init = 6;
inline constexpr std::uint64_t local_train = 7;
inline constexpr std::uint64_t selection = 8;
inline constexpr std::uint64_t clustering = 9;
inline constexpr std::uint64_t test_set = 10;
}  // namespace stream

}  // namespace fedsao
