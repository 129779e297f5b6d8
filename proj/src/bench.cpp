#include "tspkit/bench.hpp"

#include <chrono>
#include <cstdio>
#include <memory>

#include "tspkit/parallel.hpp"
#include "tspkit/trainer.hpp"

namespace tspkit {

namespace {

enum EvalStreamTag : uint64_t {
  kTagEvalInstance = 11,
  kTagEvalSolve = 12,
};

std::shared_ptr<const PolicyModel> load_policy(const SolverOptions& options) {
  if (options.checkpoint.empty())
    throw std::invalid_argument("solver '" + options.id + "' requires --checkpoint");
  return std::make_shared<const PolicyModel>(load_checkpoint(options.checkpoint).model);
}

}  // namespace

std::vector<std::string> solver_ids() {
  return {"random",         "random_insertion", "nearest_insertion",
          "farthest_insertion", "two_opt",      "combined_ls",
          "policy",         "policy_ls",        "oracle"};
}

Solver make_solver(const SolverOptions& options) {
  const std::string& id = options.id;
  if (id == "random") {
    return {"random tour", [](const TspInstance& instance, Rng& rng) {
              return random_tour(instance.n(), rng);
            }};
  }
  if (id == "random_insertion" || id == "nearest_insertion" || id == "farthest_insertion") {
    const InsertionRule rule = id == "random_insertion"   ? InsertionRule::Random
                               : id == "nearest_insertion" ? InsertionRule::Nearest
                                                           : InsertionRule::Farthest;
    return {id, [rule](const TspInstance& instance, Rng& rng) {
              return insertion_tour(instance, rule, rng.next());
            }};
  }
  if (id == "two_opt") {
    const int sweeps = options.two_opt_sweeps;
    const std::string label =
        sweeps <= 0 ? "two_opt (to convergence)"
                    : "two_opt (" + std::to_string(sweeps) + " sweeps)";
    return {label, [sweeps](const TspInstance& instance, Rng& rng) {
              return two_opt_sweep(instance, random_tour(instance.n(), rng), sweeps);
            }};
  }
  if (id == "combined_ls") {
    options.search.validate();
    const LocalSearchConfig search = options.search;
    return {"combined_ls (random start)", [search](const TspInstance& instance, Rng& rng) {
              return combined_local_search(instance, random_tour(instance.n(), rng), search,
                                           rng);
            }};
  }
  if (id == "policy") {
    auto model = load_policy(options);
    const DecodeMode mode = options.decode;
    return {"policy (" + options.checkpoint.filename().string() + ")",
            [model, mode](const TspInstance& instance, Rng& rng) {
              return model->rollout(instance, mode, rng).tour;
            }};
  }
  if (id == "policy_ls") {
    auto model = load_policy(options);
    options.search.validate();
    const LocalSearchConfig search = options.search;
    const DecodeMode mode = options.decode;
    return {"policy+ls (" + options.checkpoint.filename().string() + ")",
            [model, mode, search](const TspInstance& instance, Rng& rng) {
              Trajectory traj = model->rollout(instance, mode, rng);
              return combined_local_search(instance, std::move(traj.tour), search, rng);
            }};
  }
  if (id == "oracle") {
    return {"held_karp_exact", [](const TspInstance& instance, Rng&) {
              return held_karp_exact(instance);
            }};
  }
  throw std::invalid_argument("unknown solver id '" + id + "'");
}

EvalReport evaluate_solver(const Solver& solver, int n, int count, uint64_t seed,
                           const EvalOptions& options) {
  if (n < 1) throw std::invalid_argument("evaluate_solver: n must be >= 1");
  if (count < 1) throw std::invalid_argument("evaluate_solver: count must be >= 1");

  std::vector<double> lengths(count);
  std::vector<double> seconds(count);
  std::vector<double> optima(options.oracle_gap && !options.reference_mean.has_value() &&
                                     n <= kHeldKarpMaxCities
                                 ? count
                                 : 0);

  parallel_for_indexed(count, options.threads, [&](int i) {
    const TspInstance instance =
        generate_instance(n, derive_seed(seed, {kTagEvalInstance, static_cast<uint64_t>(i)}));
    Rng rng(derive_seed(seed, {kTagEvalSolve, static_cast<uint64_t>(i)}));
    const auto start = std::chrono::steady_clock::now();
    const Tour tour = solver.solve(instance, rng);
    const auto stop = std::chrono::steady_clock::now();
    seconds[i] = std::chrono::duration<double>(stop - start).count();
    lengths[i] = tour_length(instance, tour);
    if (!optima.empty()) optima[i] = tour_length(instance, held_karp_exact(instance));
  });

  EvalReport report;
  report.solver = solver.label;
  report.n = n;
  report.count = count;
  report.seed = seed;
  double total_len = 0.0, total_time = 0.0;
  for (int i = 0; i < count; ++i) {
    total_len += lengths[i];
    total_time += seconds[i];
  }
  report.mean_length = total_len / count;
  report.total_s = total_time;
  report.per_instance_ms = total_time / count * 1000.0;

  if (options.reference_mean.has_value()) {
    report.gap_pct = (report.mean_length / *options.reference_mean - 1.0) * 100.0;
    report.gap_reference = "supplied reference mean";
  } else if (!optima.empty()) {
    double total_opt = 0.0;
    for (double v : optima) total_opt += v;
    report.gap_pct = (report.mean_length / (total_opt / count) - 1.0) * 100.0;
    report.gap_reference = "optimal (held_karp_exact)";
  }
  return report;
}

std::string report_csv_header() {
  return "solver,n,count,seed,mean_length,gap_pct,total_s,per_instance_ms";
}

std::string report_csv_row(const EvalReport& report, bool include_timing) {
  char buf[256];
  char gap[32] = "";
  if (report.gap_pct.has_value()) std::snprintf(gap, sizeof(gap), "%.2f", *report.gap_pct);
  std::snprintf(buf, sizeof(buf), "%s,%d,%d,%llu,%.6f,%s,%.3f,%.4f", report.solver.c_str(),
                report.n, report.count,
                static_cast<unsigned long long>(report.seed), report.mean_length, gap,
                include_timing ? report.total_s : 0.0,
                include_timing ? report.per_instance_ms : 0.0);
  return buf;
}

int default_eval_count(int n) { return n <= 100 ? 10000 : 128; }

std::vector<AblationRow> run_ablation(const AblationSpec& spec) {
  if (spec.variants.empty()) throw std::invalid_argument("run_ablation: no variants");
  if (spec.sizes.empty()) throw std::invalid_argument("run_ablation: no sizes");
  if (!spec.counts.empty() && spec.counts.size() != spec.sizes.size())
    throw std::invalid_argument("run_ablation: counts must match sizes");

  std::vector<Solver> solvers;
  for (const std::string& variant : spec.variants) {
    SolverOptions options;
    options.search = spec.search;
    if (variant == "wo_rl") {
      options.id = "combined_ls";
    } else if (variant == "full" || variant == "wo_cl" || variant == "wo_baseline" ||
               variant == "wo_ls") {
      options.id = "policy_ls";
      auto it = spec.checkpoints.find(variant);
      if (it == spec.checkpoints.end())
        throw std::invalid_argument("run_ablation: variant '" + variant +
                                    "' needs a checkpoint");
      options.checkpoint = it->second;
    } else {
      throw std::invalid_argument("run_ablation: unknown variant '" + variant + "'");
    }
    solvers.push_back(make_solver(options));
  }

  std::vector<AblationRow> rows;
  for (size_t s = 0; s < spec.sizes.size(); ++s) {
    const int n = spec.sizes[s];
    const int count =
        (!spec.counts.empty() && spec.counts[s] > 0) ? spec.counts[s] : default_eval_count(n);
    for (size_t v = 0; v < spec.variants.size(); ++v) {
      EvalOptions eval_options;
      eval_options.threads = spec.threads;
      eval_options.oracle_gap = false;
      const EvalReport report =
          evaluate_solver(solvers[v], n, count, spec.seed, eval_options);
      rows.push_back({spec.variants[v], n, count, report.mean_length});
    }
  }
  return rows;
}

}  // namespace tspkit
