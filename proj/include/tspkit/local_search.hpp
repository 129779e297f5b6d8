#pragma once

#include <cstdint>

#include "tspkit/core.hpp"
#include "tspkit/rng.hpp"

namespace tspkit {

// Hyperparameters of the combined local search: `rounds` alternations of
// floor(alpha * N^beta) random 2-opt trials and one local insertion
// optimization pass with window fraction `gamma`.
struct LocalSearchConfig {
  double alpha = 0.5;
  double beta = 1.5;
  double gamma = 0.25;
  int rounds = 25;
  // Window distance in the insertion pass: circular index distance by
  // default; linear |t'-t| kept for ablation.
  bool circular_window = true;

  void validate() const;
};

enum class InsertionRule { Nearest, Farthest, Random };

// Moves that reject a delta above this threshold are discarded: equal-length
// moves must not be applied or window scans could cycle forever.
inline constexpr double kImprovementThreshold = -1e-12;

// Uniform random permutation of 0..n-1.
Tour random_tour(int n, Rng& rng);

// Constructive insertion heuristic. Starts from a random city, then
// repeatedly picks the next city by `rule` (nearest/farthest by min distance
// to the partial tour, or uniformly at random) and inserts it at the
// cheapest cyclic position.
Tour insertion_tour(const TspInstance& instance, InsertionRule rule, uint64_t seed);

// Relocation of the city at tour position `from_pos` to just after position
// `to_pos`. to_pos == from_pos - 1 (and to_pos == from_pos) leave the tour
// unchanged.
struct RelocationMove {
  int from_pos = 0;
  int to_pos = 0;
};

// Length change of a relocation, from the six affected edges only.
double relocate_delta(const TspInstance& instance, const Tour& tour, RelocationMove move);

Tour apply_relocation(Tour tour, RelocationMove move);

// Full 2-opt: scans all position pairs i < j, reversing whenever that
// strictly shortens the tour; repeats until a sweep finds no improvement or
// `max_sweeps` sweeps ran (max_sweeps < 0 means no cap).
Tour two_opt_sweep(const TspInstance& instance, Tour tour, int max_sweeps = -1);

// `count` draws of a uniform position pair i < j, each applied iff the
// reversal strictly improves. Non-improving draws still consume an
// iteration.
Tour random_two_opt(const TspInstance& instance, Tour tour, long count, Rng& rng);

// One pass over all tour positions t, relocating each city to the best
// position within index distance < gamma*N of t (identity included, so the
// length never increases).
Tour local_insertion_optimization(const TspInstance& instance, Tour tour, double gamma,
                                  bool circular_window = true);

// Alternates random 2-opt and local insertion optimization for
// config.rounds rounds.
Tour combined_local_search(const TspInstance& instance, Tour tour,
                           const LocalSearchConfig& config, Rng& rng);

// floor(alpha * n^beta), the per-round random 2-opt budget.
long two_opt_budget(int n, double alpha, double beta);

}  // namespace tspkit
