#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "tspkit/bench.hpp"
#include "tspkit/parallel.hpp"
#include "tspkit/trainer.hpp"

namespace fs = std::filesystem;
using namespace tspkit;

namespace {

void write_csv(const std::string& csv_path, const std::string& content) {
  if (csv_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot open CSV output '" + csv_path + "'");
  out << content;
  if (!out) throw std::runtime_error("failed writing CSV output '" + csv_path + "'");
}

double parse_reference_mean(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open reference report '" + path.string() + "'");
  std::string line;
  std::getline(in, line);  // header
  if (!std::getline(in, line))
    throw std::runtime_error("reference report '" + path.string() + "' has no data row");
  std::stringstream fields(line);
  std::string field;
  for (int i = 0; i <= 4; ++i)
    if (!std::getline(fields, field, ','))
      throw std::runtime_error("reference report '" + path.string() + "' is malformed");
  return std::stod(field);
}

std::vector<TspInstance> load_instance_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<TspInstance> instances;
  for (const fs::path& file : files) instances.push_back(read_instance(file));
  if (instances.empty())
    throw std::runtime_error("no instance files found in '" + dir.string() + "'");
  return instances;
}

struct SolverFlags {
  SolverOptions options;
  std::string decode = "greedy";

  void attach(CLI::App* cmd, const std::string& default_id) {
    options.id = default_id;
    cmd->add_option("--solver", options.id, "solver id")
        ->check(CLI::IsMember(solver_ids()));
    cmd->add_option("--checkpoint", options.checkpoint, "policy checkpoint file");
    cmd->add_option("--decode", decode, "policy decoding mode")
        ->check(CLI::IsMember({"greedy", "sample"}));
    cmd->add_option("--ls-alpha", options.search.alpha, "random 2-opt budget factor");
    cmd->add_option("--ls-beta", options.search.beta, "random 2-opt budget exponent");
    cmd->add_option("--ls-gamma", options.search.gamma, "insertion window fraction");
    cmd->add_option("--ls-rounds", options.search.rounds, "combined search rounds");
    cmd->add_flag("--ls-linear-window",
                  [this](size_t) { options.search.circular_window = false; },
                  "use linear index distance in the insertion window");
    cmd->add_option("--two-opt-sweeps", options.two_opt_sweeps,
                    "two_opt scan passes (<= 0: run to convergence)");
  }

  Solver build() {
    options.decode = decode == "sample" ? DecodeMode::Sample : DecodeMode::Greedy;
    return make_solver(options);
  }
};

int cmd_generate(int n, int count, uint64_t seed, const std::string& out) {
  std::ostringstream csv;
  csv << "index,path,n,seed\n";
  if (count == 1 && !fs::is_directory(out)) {
    write_instance(generate_instance(n, seed), fs::path(out));
    csv << "0," << out << "," << n << "," << seed << "\n";
  } else {
    fs::create_directories(out);
    for (int i = 0; i < count; ++i) {
      const uint64_t instance_seed = derive_seed(seed, {static_cast<uint64_t>(i)});
      char name[32];
      std::snprintf(name, sizeof(name), "instance_%05d.tsp", i);
      const fs::path path = fs::path(out) / name;
      write_instance(generate_instance(n, instance_seed), path);
      csv << i << "," << path.string() << "," << n << "," << instance_seed << "\n";
    }
  }
  std::cout << csv.str();
  std::cerr << "wrote " << count << " instance(s) of size " << n << " to " << out << "\n";
  return 0;
}

int cmd_solve(SolverFlags& flags, const std::string& instance_path, uint64_t seed,
              const std::string& tour_out, const std::string& csv_path) {
  const TspInstance instance = read_instance(fs::path(instance_path));
  Solver solver = flags.build();
  Rng rng(seed);
  const auto start = std::chrono::steady_clock::now();
  const Tour tour = solver.solve(instance, rng);
  const auto stop = std::chrono::steady_clock::now();

  EvalReport report;
  report.solver = solver.label;
  report.n = instance.n();
  report.count = 1;
  report.seed = seed;
  report.mean_length = tour_length(instance, tour);
  report.total_s = std::chrono::duration<double>(stop - start).count();
  report.per_instance_ms = report.total_s * 1000.0;

  if (!tour_out.empty()) {
    std::ofstream out(tour_out);
    if (!out) throw std::runtime_error("cannot open tour output '" + tour_out + "'");
    for (int city : tour.order) out << city << "\n";
  }
  write_csv(csv_path, report_csv_header() + "\n" + report_csv_row(report) + "\n");
  std::cerr << solver.label << " on " << instance_path << ": length "
            << report.mean_length << "\n";
  return 0;
}

int cmd_oracle(const std::string& instance_path, int n, uint64_t seed,
               const std::string& csv_path) {
  const TspInstance instance = instance_path.empty()
                                   ? generate_instance(n, seed)
                                   : read_instance(fs::path(instance_path));
  const auto start = std::chrono::steady_clock::now();
  const Tour tour = held_karp_exact(instance);
  const auto stop = std::chrono::steady_clock::now();

  EvalReport report;
  report.solver = "held_karp_exact";
  report.n = instance.n();
  report.count = 1;
  report.seed = seed;
  report.mean_length = tour_length(instance, tour);
  report.gap_pct = 0.0;
  report.total_s = std::chrono::duration<double>(stop - start).count();
  report.per_instance_ms = report.total_s * 1000.0;
  write_csv(csv_path, report_csv_header() + "\n" + report_csv_row(report) + "\n");

  std::ostringstream order;
  for (size_t i = 0; i < tour.order.size(); ++i)
    order << (i ? " " : "") << tour.order[i];
  std::cerr << "optimal length " << report.mean_length << " via order " << order.str()
            << "\n";
  return 0;
}

int cmd_eval(SolverFlags& flags, int n, int count, uint64_t seed,
             const std::string& reference, bool no_oracle_gap, bool no_timing, int threads,
             const std::string& csv_path) {
  Solver solver = flags.build();
  EvalOptions options;
  options.threads = threads > 0 ? threads : default_thread_count();
  options.oracle_gap = !no_oracle_gap;
  if (!reference.empty()) options.reference_mean = parse_reference_mean(reference);
  if (count <= 0) count = default_eval_count(n);

  const EvalReport report = evaluate_solver(solver, n, count, seed, options);
  write_csv(csv_path, report_csv_header() + "\n" + report_csv_row(report, !no_timing) + "\n");

  std::cerr << report.solver << ": n=" << n << " count=" << count << " mean length "
            << report.mean_length;
  if (report.gap_pct.has_value()) {
    char gap[64];
    std::snprintf(gap, sizeof(gap), " gap %.2f%% vs %s", *report.gap_pct,
                  report.gap_reference.c_str());
    std::cerr << gap;
    if (report.gap_reference.find("optimal") == std::string::npos)
      std::cerr << " (reference is not optimal)";
  }
  if (!no_timing) std::cerr << " (" << report.per_instance_ms << " ms/instance)";
  std::cerr << "\n";
  return 0;
}

struct TrainFlags {
  TrainConfig config;
  std::string out_dir;
  std::string instances_dir;
  std::string baseline = "rollout";
  std::string optimizer = "adam";
  bool no_curriculum = false;
  bool no_search_in_training = false;
  bool no_clip = false;
  bool paper_literal_baseline = false;
};

void apply_json_config(TrainConfig& config, TrainFlags& flags, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config file '" + path.string() + "': " + e.what());
  }
  auto get = [&](const char* key, auto& target) {
    if (j.contains(key)) target = j.at(key).get<std::decay_t<decltype(target)>>();
  };
  get("epochs", config.epochs);
  get("steps_per_epoch", config.steps_per_epoch);
  get("batch_size", config.batch_size);
  get("step_size", config.step_size);
  get("decay", config.decay);
  get("curriculum_sigma", config.curriculum_sigma);
  get("n_min", config.n_min);
  get("n_max", config.n_max);
  get("hidden", config.model.hidden);
  get("gnn_layers", config.model.gnn_layers);
  get("ls_alpha", config.search.alpha);
  get("ls_beta", config.search.beta);
  get("ls_gamma", config.search.gamma);
  get("ls_rounds", config.search.rounds);
  get("seed", config.master_seed);
  get("clip_norm", config.clip_norm);
  get("threads", config.threads);
  get("checkpoint_every", config.checkpoint_every);
  get("uniform_random_first", config.uniform_random_first);
  get("baseline", flags.baseline);
  get("optimizer", flags.optimizer);
  get("center_weights", config.center_weights);
  get("no_curriculum", flags.no_curriculum);
  get("no_search_in_training", flags.no_search_in_training);
}

int cmd_train(TrainFlags& flags) {
  TrainConfig& config = flags.config;
  config.use_curriculum = !flags.no_curriculum;
  config.search_in_training = !flags.no_search_in_training;
  if (flags.no_clip) config.clip_norm = 0.0;
  if (flags.paper_literal_baseline || flags.baseline == "rollout")
    config.baseline = BaselineMode::PolicyRollout;  // the literal rollout form
  else if (flags.baseline == "searched-return")
    config.baseline = BaselineMode::SearchedReturn;
  else if (flags.baseline == "central-self-critic")
    config.baseline = BaselineMode::CentralSelfCritic;
  else if (flags.baseline == "improvement")
    config.baseline = BaselineMode::ImprovementWeighted;
  else
    throw std::runtime_error("unknown baseline '" + flags.baseline + "'");
  if (flags.optimizer == "adam")
    config.optimizer = OptimizerKind::Adam;
  else if (flags.optimizer == "sgd")
    config.optimizer = OptimizerKind::Sgd;
  else
    throw std::runtime_error("unknown optimizer '" + flags.optimizer + "'");
  if (!flags.instances_dir.empty())
    config.fixed_instances = load_instance_dir(flags.instances_dir);

  const TrainResult result = train(config, flags.out_dir);
  std::cerr << "trained " << config.epochs << " epoch(s); final checkpoint "
            << result.final_checkpoint.string() << "\n";
  std::cout << "final_checkpoint,metrics_csv,epochs\n"
            << result.final_checkpoint.string() << "," << result.metrics_csv.string() << ","
            << result.final_epoch << "\n";
  return 0;
}

int cmd_ablate(const std::vector<std::string>& variants, const std::vector<int>& sizes,
               const std::vector<int>& counts, uint64_t seed, LocalSearchConfig search,
               const std::vector<std::string>& checkpoint_pairs, int threads,
               const std::string& csv_path) {
  AblationSpec spec;
  spec.variants = variants;
  spec.sizes = sizes;
  spec.counts = counts;
  spec.seed = seed;
  spec.search = search;
  spec.threads = threads > 0 ? threads : default_thread_count();
  for (const std::string& pair : checkpoint_pairs) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--checkpoint expects variant=path, got '" + pair + "'");
    spec.checkpoints[pair.substr(0, eq)] = pair.substr(eq + 1);
  }

  const std::vector<AblationRow> rows = run_ablation(spec);

  // reference means for gap columns: exact oracle at small sizes, farthest
  // insertion beyond it (not optimal; labeled in the summary)
  std::map<int, double> reference;
  for (size_t s = 0; s < spec.sizes.size(); ++s) {
    const int n = spec.sizes[s];
    const int count =
        (!counts.empty() && counts[s] > 0) ? counts[s] : default_eval_count(n);
    SolverOptions ref_options;
    ref_options.id = n <= kHeldKarpMaxCities ? "oracle" : "farthest_insertion";
    EvalOptions eval_options;
    eval_options.threads = spec.threads;
    eval_options.oracle_gap = false;
    reference[n] =
        evaluate_solver(make_solver(ref_options), n, count, seed, eval_options).mean_length;
  }

  std::ostringstream csv;
  csv << "n,count";
  for (const std::string& v : variants) csv << "," << v << "_length," << v << "_gap_pct";
  csv << "\n";
  for (size_t s = 0; s < spec.sizes.size(); ++s) {
    const int n = spec.sizes[s];
    bool first = true;
    for (const AblationRow& row : rows) {
      if (row.n != n) continue;
      if (first) {
        csv << n << "," << row.count;
        first = false;
      }
      char cell[64];
      std::snprintf(cell, sizeof(cell), ",%.6f,%.2f", row.mean_length,
                    (row.mean_length / reference[n] - 1.0) * 100.0);
      csv << cell;
    }
    csv << "\n";
  }
  write_csv(csv_path, csv.str());

  std::cerr << "ablation over " << variants.size() << " variant(s), " << sizes.size()
            << " size(s); gaps are vs held_karp_exact for n <= " << kHeldKarpMaxCities
            << " and vs farthest insertion (not optimal) beyond\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tspkit: TSP instances, heuristic/learned solvers, training and benchmarks"};
  app.require_subcommand(1);
  int exit_code = 0;

  // generate
  auto gen = std::make_shared<std::tuple<int, int, uint64_t, std::string>>(20, 1, 1, "");
  CLI::App* generate = app.add_subcommand("generate", "write random instances");
  generate->add_option("--n", std::get<0>(*gen), "cities per instance")->required();
  generate->add_option("--count", std::get<1>(*gen), "number of instances");
  generate->add_option("--seed", std::get<2>(*gen), "master seed");
  generate->add_option("--out", std::get<3>(*gen), "output file (count=1) or directory")
      ->required();
  generate->callback([gen, &exit_code]() {
    exit_code = cmd_generate(std::get<0>(*gen), std::get<1>(*gen), std::get<2>(*gen),
                             std::get<3>(*gen));
  });

  // solve
  auto solve_flags = std::make_shared<SolverFlags>();
  auto solve_args = std::make_shared<std::tuple<std::string, uint64_t, std::string, std::string>>(
      "", 1, "", "");
  CLI::App* solve = app.add_subcommand("solve", "solve one instance file");
  solve->add_option("--instance", std::get<0>(*solve_args), "instance file (native or TSPLIB)")
      ->required();
  solve->add_option("--seed", std::get<1>(*solve_args), "solver seed");
  solve->add_option("--tour-out", std::get<2>(*solve_args), "write the tour order here");
  solve->add_option("--csv", std::get<3>(*solve_args), "CSV output path (default stdout)");
  solve_flags->attach(solve, "farthest_insertion");
  solve->callback([solve_flags, solve_args, &exit_code]() {
    exit_code = cmd_solve(*solve_flags, std::get<0>(*solve_args), std::get<1>(*solve_args),
                          std::get<2>(*solve_args), std::get<3>(*solve_args));
  });

  // oracle
  auto oracle_args =
      std::make_shared<std::tuple<std::string, int, uint64_t, std::string>>("", 10, 1, "");
  CLI::App* oracle = app.add_subcommand("oracle", "exact solution for a small instance");
  oracle->add_option("--instance", std::get<0>(*oracle_args), "instance file");
  oracle->add_option("--n", std::get<1>(*oracle_args), "generate an instance of this size");
  oracle->add_option("--seed", std::get<2>(*oracle_args), "generation seed");
  oracle->add_option("--csv", std::get<3>(*oracle_args), "CSV output path (default stdout)");
  oracle->callback([oracle_args, &exit_code]() {
    exit_code = cmd_oracle(std::get<0>(*oracle_args), std::get<1>(*oracle_args),
                           std::get<2>(*oracle_args), std::get<3>(*oracle_args));
  });

  // eval
  auto eval_flags = std::make_shared<SolverFlags>();
  struct EvalArgs {
    int n = 20;
    int count = 0;
    uint64_t seed = 1;
    std::string reference;
    bool no_oracle_gap = false;
    bool no_timing = false;
    int threads = 0;
    std::string csv;
  };
  auto eval_args = std::make_shared<EvalArgs>();
  CLI::App* eval = app.add_subcommand("eval", "evaluate a solver over seeded instances");
  eval->add_option("--n", eval_args->n, "instance size")->required();
  eval->add_option("--count", eval_args->count,
                   "instances to evaluate (default: 10000 up to n=100, else 128)");
  eval->add_option("--seed", eval_args->seed, "master seed");
  eval->add_option("--reference", eval_args->reference,
                   "earlier report CSV whose mean_length anchors the gap");
  eval->add_flag("--no-oracle-gap", eval_args->no_oracle_gap,
                 "skip the exact-oracle gap even when n <= 15");
  eval->add_flag("--no-timing", eval_args->no_timing,
                 "zero the timing columns (byte-identical reruns)");
  eval->add_option("--threads", eval_args->threads, "worker threads (0 = all cores)");
  eval->add_option("--csv", eval_args->csv, "CSV output path (default stdout)");
  eval_flags->attach(eval, "farthest_insertion");
  eval->callback([eval_flags, eval_args, &exit_code]() {
    exit_code = cmd_eval(*eval_flags, eval_args->n, eval_args->count, eval_args->seed,
                         eval_args->reference, eval_args->no_oracle_gap, eval_args->no_timing,
                         eval_args->threads, eval_args->csv);
  });

  // train
  auto train_flags = std::make_shared<TrainFlags>();
  CLI::App* train_cmd = app.add_subcommand("train", "run the interleaved policy training");
  std::string config_path;
  train_cmd->add_option("--config", config_path, "JSON config file (flags take precedence)");
  train_cmd->add_option("--out", train_flags->out_dir, "output directory")->required();
  TrainConfig& tc = train_flags->config;
  train_cmd->add_option("--epochs", tc.epochs, "training epochs");
  train_cmd->add_option("--steps-per-epoch", tc.steps_per_epoch, "gradient steps per epoch");
  train_cmd->add_option("--batch-size", tc.batch_size, "instances per step");
  train_cmd->add_option("--step-size", tc.step_size, "initial learning rate");
  train_cmd->add_option("--decay", tc.decay, "per-epoch learning-rate decay");
  train_cmd->add_option("--curriculum-sigma", tc.curriculum_sigma,
                        "curriculum Gaussian spread");
  train_cmd->add_option("--n-min", tc.n_min, "smallest training size");
  train_cmd->add_option("--n-max", tc.n_max, "largest training size");
  train_cmd->add_option("--hidden", tc.model.hidden, "embedding width");
  train_cmd->add_option("--gnn-layers", tc.model.gnn_layers, "graph encoder depth");
  train_cmd->add_option("--ls-alpha", tc.search.alpha, "random 2-opt budget factor");
  train_cmd->add_option("--ls-beta", tc.search.beta, "random 2-opt budget exponent");
  train_cmd->add_option("--ls-gamma", tc.search.gamma, "insertion window fraction");
  train_cmd->add_option("--ls-rounds", tc.search.rounds, "combined search rounds");
  train_cmd->add_option("--seed", tc.master_seed, "master seed");
  train_cmd->add_option("--clip-norm", tc.clip_norm, "gradient clipping norm");
  train_cmd->add_flag("--no-clip", train_flags->no_clip, "disable gradient clipping");
  train_cmd->add_option("--threads", tc.threads, "worker threads (0 = all cores)");
  train_cmd->add_option("--checkpoint-every", tc.checkpoint_every,
                        "epochs between checkpoints");
  train_cmd->add_flag("--uniform-random-first", tc.uniform_random_first,
                      "draw the first city uniformly instead of fixing city 0");
  train_cmd->add_flag("--no-curriculum", train_flags->no_curriculum,
                      "train every epoch at n-max");
  train_cmd->add_flag("--no-search-in-training", train_flags->no_search_in_training,
                      "skip local search during training (kept for testing)");
  train_cmd->add_option("--baseline", train_flags->baseline,
                        "rollout | searched-return | central-self-critic | improvement")
      ->check(
          CLI::IsMember({"rollout", "searched-return", "central-self-critic", "improvement"}));
  train_cmd->add_flag("--paper-literal-baseline", train_flags->paper_literal_baseline,
                      "alias for the default rollout baseline");
  train_cmd->add_flag("--center-weights", tc.center_weights,
                      "subtract the batch-mean gradient weight");
  train_cmd->add_option("--optimizer", train_flags->optimizer, "adam | sgd")
      ->check(CLI::IsMember({"adam", "sgd"}));
  train_cmd->add_option("--instances-dir", train_flags->instances_dir,
                        "train on the fixed instance files in this directory");
  train_cmd->callback([train_flags, &exit_code]() { exit_code = cmd_train(*train_flags); });

  // ablate
  struct AblateArgs {
    std::vector<std::string> variants = {"wo_rl"};
    std::vector<int> sizes = {20, 50};
    std::vector<int> counts;
    uint64_t seed = 1;
    LocalSearchConfig search;
    std::vector<std::string> checkpoints;
    int threads = 0;
    std::string csv;
  };
  auto ablate_args = std::make_shared<AblateArgs>();
  ablate_args->search.rounds = 15;  // the ablation tables run the lighter search
  CLI::App* ablate = app.add_subcommand("ablate", "evaluate training-ablation variants");
  ablate->add_option("--variants", ablate_args->variants,
                     "full, wo_rl, wo_cl, wo_baseline, wo_ls");
  ablate->add_option("--sizes", ablate_args->sizes, "instance sizes");
  ablate->add_option("--counts", ablate_args->counts,
                     "instance counts (parallel to sizes; 0 = default rule)");
  ablate->add_option("--seed", ablate_args->seed, "master seed");
  ablate->add_option("--ls-alpha", ablate_args->search.alpha, "random 2-opt budget factor");
  ablate->add_option("--ls-beta", ablate_args->search.beta, "random 2-opt budget exponent");
  ablate->add_option("--ls-gamma", ablate_args->search.gamma, "insertion window fraction");
  ablate->add_option("--ls-rounds", ablate_args->search.rounds, "combined search rounds");
  ablate->add_option("--checkpoint", ablate_args->checkpoints,
                     "variant=path checkpoint bindings (repeatable)");
  ablate->add_option("--threads", ablate_args->threads, "worker threads (0 = all cores)");
  ablate->add_option("--csv", ablate_args->csv, "CSV output path (default stdout)");
  ablate->callback([ablate_args, &exit_code]() {
    exit_code = cmd_ablate(ablate_args->variants, ablate_args->sizes, ablate_args->counts,
                           ablate_args->seed, ablate_args->search, ablate_args->checkpoints,
                           ablate_args->threads, ablate_args->csv);
  });

  try {
    // a config file seeds the train defaults; explicit flags then override
    for (int i = 1; i + 1 < argc; ++i)
      if (std::string(argv[i]) == "--config")
        apply_json_config(train_flags->config, *train_flags, argv[i + 1]);
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
