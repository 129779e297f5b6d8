#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tspkit/trainer.hpp"

using namespace tspkit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tspkit_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("curriculum_distribution follows the softmaxed Gaussian") {
  for (int epoch : {1, 5, 30, 200}) {
    const std::vector<double> p = curriculum_distribution(epoch, 3.0);
    CHECK(p.size() == 41);
    double total = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }

  auto argmax = [](const std::vector<double>& p) {
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  };
  CHECK(argmax(curriculum_distribution(30, 5.0)) == 20);  // size 30
  CHECK(argmax(curriculum_distribution(10, 5.0)) == 0);   // size 10
  // far beyond the size range the density values underflow the softmax's
  // double resolution unless sigma is wide enough to keep them apart
  CHECK(argmax(curriculum_distribution(200, 30.0)) == 40);  // size 50 (clamped)
  CHECK(argmax(curriculum_distribution(50, 5.0)) == 40);

  const std::vector<double> flat = curriculum_distribution(30, 1e6);
  const auto [lo, hi] = std::minmax_element(flat.begin(), flat.end());
  CHECK(*hi - *lo < 1e-6);

  CHECK_THROWS_AS(curriculum_distribution(30, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(curriculum_distribution(0, 1.0), std::invalid_argument);
}

TEST_CASE("improvement weighting with identity search gives an exactly zero gradient") {
  // the improvement weight collapses to the trajectory's own return as a
  // baseline, which annihilates every sample
  PolicyModel model({16, 2}, 3);
  std::vector<TspInstance> batch;
  for (int b = 0; b < 6; ++b) batch.push_back(generate_instance(9, 100 + b));

  ad::GradBuffer grads(model.params());
  StepOptions options;
  options.baseline = BaselineMode::ImprovementWeighted;
  options.search_in_training = false;  // improved tour == sampled tour
  const StepStats stats =
      policy_gradient_step(model, batch, LocalSearchConfig{}, 42, grads, options);
  CHECK(stats.mean_improvement == 0.0);
  for (size_t s = 0; s < grads.slot_count(); ++s)
    for (double g : grads[s].data) CHECK(g == 0.0);

  // the rollout baseline keeps a live REINFORCE signal in the same setup
  ad::GradBuffer rollout_grads(model.params());
  options.baseline = BaselineMode::PolicyRollout;
  policy_gradient_step(model, batch, LocalSearchConfig{}, 42, rollout_grads, options);
  CHECK(rollout_grads.global_norm() > 0.0);
}

TEST_CASE("policy_gradient_step validates batches and improves monotonically") {
  PolicyModel model({16, 1}, 5);
  ad::GradBuffer grads(model.params());

  CHECK_THROWS_AS(
      policy_gradient_step(model, std::vector<TspInstance>{}, LocalSearchConfig{}, 1, grads),
      std::invalid_argument);

  std::vector<TspInstance> mixed = {generate_instance(8, 1), generate_instance(9, 2)};
  CHECK_THROWS_AS(policy_gradient_step(model, mixed, LocalSearchConfig{}, 1, grads),
                  std::invalid_argument);

  std::vector<TspInstance> batch;
  for (int b = 0; b < 8; ++b) batch.push_back(generate_instance(10, 50 + b));
  const std::vector<TspInstance> before = batch;
  LocalSearchConfig search;
  search.rounds = 5;
  const StepStats stats = policy_gradient_step(model, batch, search, 7, grads);
  CHECK(stats.mean_improvement <= 0.0);
  CHECK(stats.mean_improved_length <= stats.mean_raw_length);
  for (size_t b = 0; b < batch.size(); ++b)  // instances are never written to
    for (int i = 0; i < batch[b].n(); ++i) {
      CHECK(batch[b].coords[i].x == before[b].coords[i].x);
      CHECK(batch[b].coords[i].y == before[b].coords[i].y);
    }
}

TEST_CASE("step gradients equal the frozen-weight surrogate gradient") {
  PolicyModel model({12, 1}, 21);
  const uint64_t step_seed = 99;
  LocalSearchConfig search;
  search.rounds = 4;
  std::vector<TspInstance> batch;
  for (int b = 0; b < 5; ++b) batch.push_back(generate_instance(8, 400 + b));

  ad::GradBuffer step_grads(model.params());
  StepOptions options;
  options.threads = 2;
  policy_gradient_step(model, batch, search, step_seed, step_grads, options);

  // replicate the step's sampled tours and gradient weights
  struct Sampled {
    Tour tour;
    double weight;
  };
  std::vector<Sampled> sampled;
  for (size_t b = 0; b < batch.size(); ++b) {
    Rng rng(derive_seed(step_seed, {static_cast<uint64_t>(b)}));
    const Trajectory traj = model.rollout(batch[b], DecodeMode::Sample, rng);
    const Tour improved = combined_local_search(batch[b], traj.tour, search, rng);
    sampled.push_back({traj.tour, tour_length(batch[b], improved) + traj.raw_length});
  }

  // surrogate (1/B) sum_b w_b * logprob_b with the weights frozen
  auto build_surrogate = [&](ad::Tape& tape) {
    ad::Value total{};
    for (size_t b = 0; b < batch.size(); ++b) {
      ad::Value lp = model.trace_log_prob(tape, batch[b], sampled[b].tour);
      ad::Value scaled =
          tape.affine(lp, sampled[b].weight / static_cast<double>(batch.size()), 0.0);
      total = (b == 0) ? scaled : tape.add(total, scaled);
    }
    return total;
  };

  ad::GradBuffer manual(model.params());
  {
    ad::Tape tape(&model.params(), &manual);
    tape.backward(build_surrogate(tape));
  }
  for (size_t s = 0; s < manual.slot_count(); ++s)
    for (int i = 0; i < manual[s].size(); ++i) {
      const double a = manual[s].data[i];
      const double b = step_grads[s].data[i];
      CHECK(std::abs(a - b) <= 1e-12 * std::max({std::abs(a), std::abs(b), 1.0}));
    }

  Rng fd_rng(3);
  const double err =
      ad::finite_difference_check(model.params(), build_surrogate, 150, 1e-5, fd_rng);
  CHECK(err < 1e-4);
}

TEST_CASE("alternative baselines run and differ from the rollout baseline") {
  PolicyModel model({12, 1}, 77);
  std::vector<TspInstance> batch;
  for (int b = 0; b < 4; ++b) batch.push_back(generate_instance(8, 900 + b));
  LocalSearchConfig search;
  search.rounds = 3;

  ad::GradBuffer rollout_grads(model.params()), csc_grads(model.params()),
      improvement_grads(model.params()), searched_grads(model.params()),
      centered_grads(model.params());
  StepOptions options;
  policy_gradient_step(model, batch, search, 5, rollout_grads, options);
  options.baseline = BaselineMode::CentralSelfCritic;
  policy_gradient_step(model, batch, search, 5, csc_grads, options);
  options.baseline = BaselineMode::ImprovementWeighted;
  policy_gradient_step(model, batch, search, 5, improvement_grads, options);
  options.baseline = BaselineMode::SearchedReturn;
  policy_gradient_step(model, batch, search, 5, searched_grads, options);
  options.baseline = BaselineMode::PolicyRollout;
  options.center_weights = true;
  policy_gradient_step(model, batch, search, 5, centered_grads, options);

  double diff_csc = 0.0, diff_imp = 0.0, diff_sr = 0.0, diff_ctr = 0.0;
  for (size_t s = 0; s < rollout_grads.slot_count(); ++s)
    for (int i = 0; i < rollout_grads[s].size(); ++i) {
      diff_csc += std::abs(csc_grads[s].data[i] - rollout_grads[s].data[i]);
      diff_imp += std::abs(improvement_grads[s].data[i] - rollout_grads[s].data[i]);
      diff_sr += std::abs(searched_grads[s].data[i] - rollout_grads[s].data[i]);
      diff_ctr += std::abs(centered_grads[s].data[i] - rollout_grads[s].data[i]);
    }
  CHECK(diff_csc > 0.0);
  CHECK(diff_imp > 0.0);
  CHECK(diff_sr > 0.0);
  CHECK(diff_ctr > 0.0);
}

TEST_CASE("repeated steps on one instance reduce the improved length") {
  PolicyModel model({16, 1}, 8);
  const TspInstance instance = generate_instance(8, 31);
  std::vector<TspInstance> batch(8, instance);
  LocalSearchConfig search;
  search.rounds = 2;
  auto optimizer = make_optimizer(OptimizerKind::Adam);

  double first = 0.0, last = 0.0;
  for (int step = 0; step < 50; ++step) {
    model.params().zero_grads();
    const StepStats stats = policy_gradient_step(model, batch, search,
                                                 derive_seed(4, {static_cast<uint64_t>(step)}),
                                                 model.params().grads());
    clip_global_norm(model.params().grads(), 1.0);
    optimizer->step(model.params(), model.params().grads(), 1e-3);
    if (step == 0) first = stats.mean_improved_length;
    last = stats.mean_improved_length;
  }
  CHECK(last < first);
}

TEST_CASE("training smoke run writes checkpoints and a deterministic metrics log") {
  TrainConfig config;
  config.epochs = 2;
  config.steps_per_epoch = 3;
  config.batch_size = 4;
  config.n_min = 10;
  config.n_max = 12;
  config.model = {8, 1};
  config.search.rounds = 2;
  config.master_seed = 2024;
  config.threads = 2;

  const fs::path dir_a = fresh_dir("train_a");
  const TrainResult result = train(config, dir_a);
  CHECK(fs::exists(result.final_checkpoint));
  CHECK(fs::exists(dir_a / "checkpoint_ep0001.ckpt"));
  CHECK(fs::exists(dir_a / "checkpoint_ep0002.ckpt"));

  const std::string metrics_a = slurp(result.metrics_csv);
  CHECK(std::count(metrics_a.begin(), metrics_a.end(), '\n') == 7);  // header + 2*3 steps

  const fs::path dir_b = fresh_dir("train_b");
  const TrainResult result_b = train(config, dir_b);
  CHECK(metrics_a == slurp(result_b.metrics_csv));

  // step sizes recorded exactly as step_size * decay^(e-1)
  std::istringstream lines(metrics_a);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    const auto last_comma = line.rfind(',');
    const int epoch = std::stoi(line.substr(0, line.find(',')));
    const double lr = std::stod(line.substr(last_comma + 1));
    CHECK(lr == step_size_at(config, epoch));
  }

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("fixed-instance training mode uses only the given set") {
  TrainConfig config;
  config.epochs = 1;
  config.steps_per_epoch = 2;
  config.batch_size = 4;
  config.model = {8, 1};
  config.search.rounds = 1;
  config.master_seed = 55;
  for (int i = 0; i < 5; ++i) config.fixed_instances.push_back(generate_instance(6, 70 + i));

  const fs::path dir = fresh_dir("train_fixed");
  const TrainResult result = train(config, dir);
  const std::string metrics = slurp(result.metrics_csv);
  // every step line reports the fixed size 6
  std::istringstream lines(metrics);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string epoch, step, n;
    std::getline(fields, epoch, ',');
    std::getline(fields, step, ',');
    std::getline(fields, n, ',');
    CHECK(n == "6");
  }
  fs::remove_all(dir);

  TrainConfig bad = config;
  bad.fixed_instances.push_back(generate_instance(7, 1));
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip bit-exactly and reject corruption") {
  PolicyModel model({16, 2}, 12);
  model.uniform_random_first = false;
  const fs::path dir = fresh_dir("ckpt");
  fs::create_directories(dir);
  const fs::path path = dir / "model.ckpt";
  save_checkpoint(path, model, 17, 555);

  const LoadedCheckpoint loaded = load_checkpoint(path);
  CHECK(loaded.epoch == 17);
  CHECK(loaded.master_seed == 555);
  CHECK(loaded.model.config().hidden == 16);
  CHECK(loaded.model.config().gnn_layers == 2);
  for (int s = 0; s < model.params().slot_count(); ++s) {
    CHECK(loaded.model.params().name(s) == model.params().name(s));
    CHECK(loaded.model.params().value(s).data == model.params().value(s).data);
  }

  const TspInstance instance = generate_instance(11, 3);
  Rng r1(0), r2(0);
  const Trajectory before = model.rollout(instance, DecodeMode::Greedy, r1);
  const Trajectory after = loaded.model.rollout(instance, DecodeMode::Greedy, r2);
  CHECK(before.tour.order == after.tour.order);

  // truncation must fail cleanly
  const std::string bytes = slurp(path);
  const fs::path cut = dir / "truncated.ckpt";
  std::ofstream(cut, std::ios::binary).write(bytes.data(), bytes.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(cut), std::runtime_error);

  const fs::path junk = dir / "junk.ckpt";
  std::ofstream(junk, std::ios::binary).write("definitely not a checkpoint", 27);
  CHECK_THROWS_AS(load_checkpoint(junk), std::runtime_error);
  fs::remove_all(dir);
}
