#include "tspkit/exact.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

namespace tspkit {

Tour held_karp_exact(const TspInstance& instance) {
  check_instance(instance);
  const int n = instance.n();
  if (n > kHeldKarpMaxCities)
    throw std::invalid_argument("held_karp_exact: N > " +
                                std::to_string(kHeldKarpMaxCities) +
                                " exceeds the size cap");
  if (n == 1) return identity_tour(1);
  if (n == 2) return identity_tour(2);

  // City 0 is the fixed start; DP over subsets of the remaining m cities.
  // dp[mask][j] = shortest path 0 -> ... -> (j+1) visiting exactly the
  // cities of `mask` (j in mask, 0-based over cities 1..n-1).
  const int m = n - 1;
  const size_t num_masks = size_t{1} << m;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(num_masks * m, kInf);
  std::vector<int8_t> parent(num_masks * m, -1);

  std::vector<double> d(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d[i * n + j] = instance.dist(i, j);

  for (int j = 0; j < m; ++j)
    dp[(size_t{1} << j) * m + j] = d[0 * n + (j + 1)];

  for (size_t mask = 1; mask < num_masks; ++mask) {
    for (int j = 0; j < m; ++j) {
      if (!(mask & (size_t{1} << j))) continue;
      const double cost_j = dp[mask * m + j];
      if (cost_j == kInf) continue;
      const size_t rest = mask;
      for (int k = 0; k < m; ++k) {
        if (rest & (size_t{1} << k)) continue;
        const size_t next_mask = mask | (size_t{1} << k);
        const double cand = cost_j + d[(j + 1) * n + (k + 1)];
        if (cand < dp[next_mask * m + k]) {
          dp[next_mask * m + k] = cand;
          parent[next_mask * m + k] = static_cast<int8_t>(j);
        }
      }
    }
  }

  const size_t full = num_masks - 1;
  double best = kInf;
  int best_j = 0;
  for (int j = 0; j < m; ++j) {
    const double cand = dp[full * m + j] + d[(j + 1) * n + 0];
    if (cand < best) {
      best = cand;
      best_j = j;
    }
  }

  Tour tour;
  tour.order.resize(n);
  size_t mask = full;
  int j = best_j;
  for (int pos = n - 1; pos >= 1; --pos) {
    tour.order[pos] = j + 1;
    const int prev = parent[mask * m + j];
    mask &= ~(size_t{1} << j);
    j = prev;
  }
  tour.order[0] = 0;
  return tour;
}

}  // namespace tspkit
