#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tspkit/core.hpp"
#include "tspkit/exact.hpp"
#include "tspkit/local_search.hpp"
#include "tspkit/policy.hpp"

namespace tspkit {

struct SolverOptions {
  std::string id;
  LocalSearchConfig search;           // combined_ls / policy_ls
  int two_opt_sweeps = 2;             // benchmark-table setting; <= 0 converges
  std::filesystem::path checkpoint;   // policy / policy_ls
  DecodeMode decode = DecodeMode::Greedy;
};

struct Solver {
  std::string label;
  std::function<Tour(const TspInstance&, Rng&)> solve;
};

// Registered ids: random, random_insertion, nearest_insertion,
// farthest_insertion, two_opt, combined_ls, policy, policy_ls, oracle.
// combined_ls is the learning-free pipeline (uniform random tour followed
// by the combined local search). Throws on unknown ids or a missing
// checkpoint for the policy solvers.
Solver make_solver(const SolverOptions& options);
std::vector<std::string> solver_ids();

struct EvalOptions {
  int threads = 1;
  // gap reference: a mean length from an earlier report, or the exact
  // oracle when N <= kHeldKarpMaxCities (automatic unless disabled)
  std::optional<double> reference_mean;
  bool oracle_gap = true;
};

struct EvalReport {
  std::string solver;
  int n = 0;
  int count = 0;
  uint64_t seed = 0;
  double mean_length = 0.0;
  std::optional<double> gap_pct;
  std::string gap_reference;  // label of what the gap is measured against
  double total_s = 0.0;       // summed per-instance solve time, I/O excluded
  double per_instance_ms = 0.0;
};

// Runs the solver on `count` seeded instances of size n and aggregates.
// Timing covers only the solve calls, never instance generation or I/O.
EvalReport evaluate_solver(const Solver& solver, int n, int count, uint64_t seed,
                           const EvalOptions& options = {});

// CSV schema: solver,n,count,seed,mean_length,gap_pct,total_s,per_instance_ms
// (gap_pct empty when no reference exists; timing zeroed when disabled so
// repeated runs are byte-identical).
std::string report_csv_header();
std::string report_csv_row(const EvalReport& report, bool include_timing = true);

struct AblationSpec {
  std::vector<std::string> variants;  // full, wo_rl, wo_cl, wo_baseline, wo_ls
  std::vector<int> sizes;
  std::vector<int> counts;  // parallel to sizes; 0 entries use the default rule
  uint64_t seed = 0;
  LocalSearchConfig search;  // ablation tables use rounds = 15
  std::map<std::string, std::filesystem::path> checkpoints;  // variant -> file
  int threads = 1;
};

struct AblationRow {
  std::string variant;
  int n = 0;
  int count = 0;
  double mean_length = 0.0;
};

// Evaluates each requested variant at each size over seeded instances.
// Learned variants resolve to policy_ls with their checkpoint; wo_rl is
// combined_ls. Throws when a learned variant lacks a checkpoint.
std::vector<AblationRow> run_ablation(const AblationSpec& spec);

// 10,000 instances up to size 100, 128 beyond (the published table sizes).
int default_eval_count(int n);

}  // namespace tspkit
