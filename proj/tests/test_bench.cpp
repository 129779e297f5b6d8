#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "tspkit/bench.hpp"
#include "tspkit/trainer.hpp"

using namespace tspkit;
namespace fs = std::filesystem;

TEST_CASE("solver registry validates ids and checkpoint requirements") {
  SolverOptions bad;
  bad.id = "annealer";
  CHECK_THROWS_AS(make_solver(bad), std::invalid_argument);

  SolverOptions policy;
  policy.id = "policy";
  CHECK_THROWS_AS(make_solver(policy), std::invalid_argument);  // no checkpoint

  for (const std::string& id : solver_ids()) {
    if (id == "policy" || id == "policy_ls") continue;
    SolverOptions options;
    options.id = id;
    const Solver solver = make_solver(options);
    const TspInstance instance = generate_instance(9, 4);
    Rng rng(1);
    const Tour tour = solver.solve(instance, rng);
    CHECK(!validate_tour(tour.order, 9).has_value());
  }
}

TEST_CASE("evaluate_solver aggregates deterministically and attaches oracle gaps") {
  SolverOptions options;
  options.id = "farthest_insertion";
  const Solver solver = make_solver(options);

  EvalOptions eval_options;
  eval_options.threads = 2;
  const EvalReport a = evaluate_solver(solver, 10, 200, 33, eval_options);
  const EvalReport b = evaluate_solver(solver, 10, 200, 33, eval_options);
  CHECK(a.mean_length == b.mean_length);
  CHECK(a.count == 200);
  REQUIRE(a.gap_pct.has_value());  // n <= 15: exact reference
  CHECK(*a.gap_pct >= 0.0);
  CHECK(a.gap_reference == "optimal (held_karp_exact)");
  CHECK(report_csv_row(a, false) == report_csv_row(b, false));

  SolverOptions oracle;
  oracle.id = "oracle";
  const EvalReport self = evaluate_solver(make_solver(oracle), 10, 50, 33, eval_options);
  REQUIRE(self.gap_pct.has_value());
  CHECK(*self.gap_pct == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(evaluate_solver(solver, 0, 10, 1), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_solver(solver, 10, 0, 1), std::invalid_argument);
}

TEST_CASE("csv rows follow the report schema") {
  CHECK(report_csv_header() ==
        "solver,n,count,seed,mean_length,gap_pct,total_s,per_instance_ms");
  EvalReport report;
  report.solver = "x";
  report.n = 20;
  report.count = 10;
  report.seed = 3;
  report.mean_length = 4.0;
  report.total_s = 1.5;
  report.per_instance_ms = 150.0;
  CHECK(report_csv_row(report, true) == "x,20,10,3,4.000000,,1.500,150.0000");
  CHECK(report_csv_row(report, false) == "x,20,10,3,4.000000,,0.000,0.0000");
  report.gap_pct = 2.345;
  CHECK(report_csv_row(report, false) == "x,20,10,3,4.000000,2.35,0.000,0.0000");
}

TEST_CASE("supplied reference means drive the gap") {
  SolverOptions options;
  options.id = "random_insertion";
  EvalOptions eval_options;
  eval_options.threads = 2;
  eval_options.reference_mean = 2.0;
  const EvalReport report = evaluate_solver(make_solver(options), 20, 100, 5, eval_options);
  REQUIRE(report.gap_pct.has_value());
  CHECK(*report.gap_pct ==
        doctest::Approx((report.mean_length / 2.0 - 1.0) * 100.0).epsilon(1e-12));
}

TEST_CASE("default counts follow the published table sizes") {
  CHECK(default_eval_count(20) == 10000);
  CHECK(default_eval_count(100) == 10000);
  CHECK(default_eval_count(200) == 128);
  CHECK(default_eval_count(1000) == 128);
}

TEST_CASE("policy solvers round-trip through checkpoints") {
  const fs::path dir = fs::temp_directory_path() / "tspkit_test_bench_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path path = dir / "tiny.ckpt";
  PolicyModel model({8, 1}, 3);
  save_checkpoint(path, model, 1, 9);

  for (const char* id : {"policy", "policy_ls"}) {
    SolverOptions options;
    options.id = id;
    options.checkpoint = path;
    options.search.rounds = 2;
    const Solver solver = make_solver(options);
    EvalOptions eval_options;
    eval_options.threads = 2;
    eval_options.oracle_gap = false;
    const EvalReport report = evaluate_solver(solver, 8, 30, 2, eval_options);
    CHECK(report.mean_length > 0.0);
  }

  // searched rollouts can only improve on raw rollouts
  SolverOptions raw{.id = "policy", .checkpoint = path};
  SolverOptions searched{.id = "policy_ls", .checkpoint = path};
  searched.search.rounds = 5;
  EvalOptions eval_options;
  eval_options.oracle_gap = false;
  const double raw_mean = evaluate_solver(make_solver(raw), 10, 50, 4, eval_options).mean_length;
  const double searched_mean =
      evaluate_solver(make_solver(searched), 10, 50, 4, eval_options).mean_length;
  CHECK(searched_mean <= raw_mean + 1e-12);
  fs::remove_all(dir);
}

TEST_CASE("run_ablation needs checkpoints for learned variants") {
  AblationSpec spec;
  spec.variants = {"full"};
  spec.sizes = {10};
  spec.counts = {5};
  CHECK_THROWS_AS(run_ablation(spec), std::invalid_argument);

  spec.variants = {"mystery"};
  CHECK_THROWS_AS(run_ablation(spec), std::invalid_argument);

  spec.variants = {"wo_rl"};
  spec.search.rounds = 3;
  spec.threads = 2;
  const std::vector<AblationRow> rows = run_ablation(spec);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].variant == "wo_rl");
  CHECK(rows[0].n == 10);
  CHECK(rows[0].count == 5);
  CHECK(rows[0].mean_length > 0.0);
}
