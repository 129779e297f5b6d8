#include "tspkit/local_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tspkit {

void LocalSearchConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("LocalSearchConfig: alpha must be > 0");
  if (!std::isfinite(beta)) throw std::invalid_argument("LocalSearchConfig: beta must be finite");
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("LocalSearchConfig: gamma must be in [0,1]");
  if (rounds < 0) throw std::invalid_argument("LocalSearchConfig: rounds must be >= 0");
}

Tour random_tour(int n, Rng& rng) {
  Tour tour = identity_tour(n);
  rng.shuffle(tour.order);
  return tour;
}

long two_opt_budget(int n, double alpha, double beta) {
  return static_cast<long>(std::floor(alpha * std::pow(static_cast<double>(n), beta)));
}

Tour insertion_tour(const TspInstance& instance, InsertionRule rule, uint64_t seed) {
  check_instance(instance);
  const int n = instance.n();
  Rng rng(seed);
  Tour tour;
  tour.order.reserve(n);

  const int start = static_cast<int>(rng.below(n));
  tour.order.push_back(start);
  if (n == 1) return tour;

  std::vector<char> in_tour(n, 0);
  in_tour[start] = 1;
  // min_dist[j]: distance from city j to the closest tour member
  std::vector<double> min_dist(n);
  for (int j = 0; j < n; ++j) min_dist[j] = instance.dist(j, start);

  for (int step = 1; step < n; ++step) {
    int chosen = -1;
    switch (rule) {
      case InsertionRule::Nearest: {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j)
          if (!in_tour[j] && min_dist[j] < best) {
            best = min_dist[j];
            chosen = j;
          }
        break;
      }
      case InsertionRule::Farthest: {
        double best = -1.0;
        for (int j = 0; j < n; ++j)
          if (!in_tour[j] && min_dist[j] > best) {
            best = min_dist[j];
            chosen = j;
          }
        break;
      }
      case InsertionRule::Random: {
        uint64_t pick = rng.below(n - step);  // among remaining, by ascending index
        for (int j = 0; j < n; ++j) {
          if (in_tour[j]) continue;
          if (pick == 0) {
            chosen = j;
            break;
          }
          --pick;
        }
        break;
      }
    }

    // Cheapest cyclic insertion position: after tour position best_pos.
    const int m = static_cast<int>(tour.order.size());
    int best_pos = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int t = 0; t < m; ++t) {
      const int a = tour.order[t];
      const int b = tour.order[(t + 1) % m];
      const double cost =
          instance.dist(a, chosen) + instance.dist(chosen, b) - instance.dist(a, b);
      if (cost < best_cost) {
        best_cost = cost;
        best_pos = t;
      }
    }
    tour.order.insert(tour.order.begin() + best_pos + 1, chosen);
    in_tour[chosen] = 1;
    for (int j = 0; j < n; ++j)
      if (!in_tour[j]) min_dist[j] = std::min(min_dist[j], instance.dist(j, chosen));
  }
  return tour;
}

namespace {

// Relocation delta without argument validation; callers guarantee ranges.
double relocate_delta_unchecked(const TspInstance& instance, const std::vector<int>& order,
                                int t, int tp) {
  const int n = static_cast<int>(order.size());
  if (tp == t || tp == (t - 1 + n) % n) return 0.0;
  const int prev = order[(t - 1 + n) % n];
  const int city = order[t];
  const int next = order[(t + 1) % n];
  const int a = order[tp];
  const int b = order[(tp + 1) % n];
  return instance.dist(prev, next) - instance.dist(prev, city) - instance.dist(city, next) +
         instance.dist(a, city) + instance.dist(city, b) - instance.dist(a, b);
}

void apply_relocation_inplace(std::vector<int>& order, int t, int tp) {
  const int n = static_cast<int>(order.size());
  if (tp == t || tp == (t - 1 + n) % n) return;
  if (tp > t)
    std::rotate(order.begin() + t, order.begin() + t + 1, order.begin() + tp + 1);
  else
    std::rotate(order.begin() + tp + 1, order.begin() + t, order.begin() + t + 1);
}

double two_opt_delta(const TspInstance& instance, const std::vector<int>& order, int i,
                     int j) {
  const int n = static_cast<int>(order.size());
  const int a = order[i];
  const int b = order[(i + 1) % n];
  const int c = order[j];
  const int d = order[(j + 1) % n];
  return instance.dist(a, c) + instance.dist(b, d) - instance.dist(a, b) -
         instance.dist(c, d);
}

// k-th pair (i, j) with i < j in lexicographic order over n positions.
std::pair<int, int> decode_pair(uint64_t k, int n) {
  auto before = [n](long long a) { return a * (2 * n - a - 1) / 2; };
  const double nd = 2.0 * n - 1.0;
  int i = static_cast<int>((nd - std::sqrt(nd * nd - 8.0 * static_cast<double>(k))) / 2.0);
  i = std::clamp(i, 0, n - 2);
  while (i > 0 && before(i) > static_cast<long long>(k)) --i;
  while (before(i + 1) <= static_cast<long long>(k)) ++i;
  const int j = static_cast<int>(static_cast<long long>(k) - before(i)) + i + 1;
  return {i, j};
}

void local_insertion_pass(const TspInstance& instance, std::vector<int>& order, double gamma,
                          bool circular) {
  const int n = static_cast<int>(order.size());
  const double window = gamma * n;
  for (int t = 0; t < n; ++t) {
    double best_delta = 0.0;
    int best_tp = -1;
    for (int tp = 0; tp < n; ++tp) {
      const int diff = std::abs(tp - t);
      const double d = circular ? std::min(diff, n - diff) : diff;
      if (!(d < window)) continue;
      if (tp == t || tp == (t - 1 + n) % n) continue;  // identity moves
      const double delta = relocate_delta_unchecked(instance, order, t, tp);
      if (delta < best_delta) {
        best_delta = delta;
        best_tp = tp;
      }
    }
    if (best_tp >= 0 && best_delta < kImprovementThreshold)
      apply_relocation_inplace(order, t, best_tp);
  }
}

}  // namespace

double relocate_delta(const TspInstance& instance, const Tour& tour, RelocationMove move) {
  const int n = tour.n();
  if (move.from_pos < 0 || move.from_pos >= n || move.to_pos < 0 || move.to_pos >= n)
    throw std::invalid_argument("relocate_delta: position out of range");
  return relocate_delta_unchecked(instance, tour.order, move.from_pos, move.to_pos);
}

Tour apply_relocation(Tour tour, RelocationMove move) {
  const int n = tour.n();
  if (move.from_pos < 0 || move.from_pos >= n || move.to_pos < 0 || move.to_pos >= n)
    throw std::invalid_argument("apply_relocation: position out of range");
  apply_relocation_inplace(tour.order, move.from_pos, move.to_pos);
  return tour;
}

Tour two_opt_sweep(const TspInstance& instance, Tour tour, int max_sweeps) {
  if (auto violation = validate_tour(tour.order, instance.n()))
    throw std::invalid_argument("two_opt_sweep: " + *violation);
  const int n = tour.n();
  int sweeps = 0;
  bool improved = true;
  while (improved && (max_sweeps < 0 || sweeps < max_sweeps)) {
    improved = false;
    ++sweeps;
    for (int i = 0; i + 1 < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (two_opt_delta(instance, tour.order, i, j) < kImprovementThreshold) {
          std::reverse(tour.order.begin() + i + 1, tour.order.begin() + j + 1);
          improved = true;
        }
      }
    }
  }
  return tour;
}

Tour random_two_opt(const TspInstance& instance, Tour tour, long count, Rng& rng) {
  if (auto violation = validate_tour(tour.order, instance.n()))
    throw std::invalid_argument("random_two_opt: " + *violation);
  const int n = tour.n();
  if (n < 2) return tour;
  const uint64_t num_pairs = static_cast<uint64_t>(n) * (n - 1) / 2;
  for (long it = 0; it < count; ++it) {
    const auto [i, j] = decode_pair(rng.below(num_pairs), n);
    if (two_opt_delta(instance, tour.order, i, j) < kImprovementThreshold)
      std::reverse(tour.order.begin() + i + 1, tour.order.begin() + j + 1);
  }
  return tour;
}

Tour local_insertion_optimization(const TspInstance& instance, Tour tour, double gamma,
                                  bool circular_window) {
  if (auto violation = validate_tour(tour.order, instance.n()))
    throw std::invalid_argument("local_insertion_optimization: " + *violation);
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("local_insertion_optimization: gamma must be in [0,1]");
  local_insertion_pass(instance, tour.order, gamma, circular_window);
  return tour;
}

Tour combined_local_search(const TspInstance& instance, Tour tour,
                           const LocalSearchConfig& config, Rng& rng) {
  config.validate();
  if (auto violation = validate_tour(tour.order, instance.n()))
    throw std::invalid_argument("combined_local_search: " + *violation);
  const long budget = two_opt_budget(instance.n(), config.alpha, config.beta);
  for (int round = 0; round < config.rounds; ++round) {
    tour = random_two_opt(instance, std::move(tour), budget, rng);
    local_insertion_pass(instance, tour.order, config.gamma, config.circular_window);
  }
  return tour;
}

}  // namespace tspkit
