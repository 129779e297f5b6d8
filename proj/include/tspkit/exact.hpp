#pragma once

#include "tspkit/core.hpp"

namespace tspkit {

inline constexpr int kHeldKarpMaxCities = 15;

// Provably optimal tour by dynamic programming over city subsets
// (O(2^N * N^2) time, O(2^N * N) memory). Throws std::invalid_argument
// when N exceeds kHeldKarpMaxCities.
Tour held_karp_exact(const TspInstance& instance);

}  // namespace tspkit
