#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "bdfl/hash.hpp"

namespace bdfl {

// Every random stream in the simulator is derived from the master seed and a
// purpose tag, so adding a client or reordering setup code never shifts the
// randomness of unrelated components.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
    return Sha256().update_u64(master).update("/").update(tag).finish().leading_u64();
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view tag) {
    return std::mt19937_64(derive_seed(master, tag));
}

}  // namespace bdfl
