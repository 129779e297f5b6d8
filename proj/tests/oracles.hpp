#pragma once

// Test-only reference implementations, kept independent of the library code
// paths they are used to verify.

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "tspkit/core.hpp"

namespace tspkit::testing {

inline double cycle_length(const TspInstance& instance, const std::vector<int>& order) {
  double total = 0.0;
  const int n = static_cast<int>(order.size());
  for (int t = 0; t < n; ++t)
    total += dist(instance.coords[order[t]], instance.coords[order[(t + 1) % n]]);
  return total;
}

// Exact optimum by enumerating all (n-1)! permutations with city 0 fixed.
inline std::pair<double, std::vector<int>> brute_force_optimal(const TspInstance& instance) {
  const int n = instance.n();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best_order = perm;
  double best = cycle_length(instance, perm);
  // first entry stays 0: tours are rotation-invariant
  while (std::next_permutation(perm.begin() + 1, perm.end())) {
    const double len = cycle_length(instance, perm);
    if (len < best) {
      best = len;
      best_order = perm;
    }
  }
  return {best, best_order};
}

}  // namespace tspkit::testing
