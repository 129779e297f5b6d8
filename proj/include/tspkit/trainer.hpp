#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "tspkit/local_search.hpp"
#include "tspkit/policy.hpp"

namespace tspkit {

// Per-epoch instance-size distribution: softmax of Gaussian density values
// centered at the epoch index, over sizes n_min..n_max.
std::vector<double> curriculum_distribution(int epoch, double sigma, int n_min = 10,
                                            int n_max = 50);

// Per-trajectory weight on the log-probability gradient.
//   SearchedReturn:      L(improved) - batch mean of L(improved). Gradient
//                        descent on the expected post-search length; the
//                        batch mean is a valid (action-independent)
//                        baseline, so centering only reduces variance.
//   PolicyRollout:       L(improved) + L(sampled) - the rollout baseline
//                        applied to the searched return, which descends
//                        E[L_improved + L_sampled] (raw and searched
//                        lengths together).
//   ImprovementWeighted: L(improved) - L(sampled) <= 0. Ascends the
//                        expected search improvement; in isolation this
//                        rewards easily-improvable (long) raw tours, kept
//                        for comparison.
//   CentralSelfCritic:   greedy-rollout difference, centered over the
//                        batch.
enum class BaselineMode {
  SearchedReturn,
  PolicyRollout,
  CentralSelfCritic,
  ImprovementWeighted,
};

enum class OptimizerKind { Adam, Sgd };

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ad::ParameterStore& params, const ad::GradBuffer& grads, double lr) = 0;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind);

// Scales all gradients so the global L2 norm is at most max_norm; returns
// the factor applied (1.0 when already within bounds).
double clip_global_norm(ad::GradBuffer& grads, double max_norm);

struct StepStats {
  double mean_raw_length = 0.0;
  double mean_improved_length = 0.0;
  double mean_improvement = 0.0;  // improved minus raw, never positive
};

struct StepOptions {
  BaselineMode baseline = BaselineMode::PolicyRollout;
  bool search_in_training = true;
  // subtract the batch-mean weight (a valid action-independent baseline:
  // same expected gradient, less variance)
  bool center_weights = false;
  int threads = 1;
};

// One REINFORCE batch: sample a trajectory per instance, improve it with
// the combined local search, and accumulate the gradient of
//   (1/|B|) sum_b advantage_b * sum_t log pi(a_t | s_t)
// into grad_out (a descent direction for the interleaved objective).
// All instances must share one size. Per-instance randomness derives from
// step_seed, so results do not depend on the thread count.
StepStats policy_gradient_step(const PolicyModel& model, std::span<const TspInstance> batch,
                               const LocalSearchConfig& search, uint64_t step_seed,
                               ad::GradBuffer& grad_out, const StepOptions& options = {});

struct TrainConfig {
  int epochs = 200;
  int steps_per_epoch = 1000;
  int batch_size = 128;
  double step_size = 0.001;
  double decay = 0.96;
  double curriculum_sigma = 5.0;
  int n_min = 10;
  int n_max = 50;
  ModelConfig model;
  LocalSearchConfig search;
  uint64_t master_seed = 1;

  bool use_curriculum = true;  // false: every epoch trains at n_max
  BaselineMode baseline = BaselineMode::PolicyRollout;
  bool center_weights = false;
  bool search_in_training = true;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double clip_norm = 1.0;  // <= 0 disables clipping
  int threads = 0;         // 0: hardware concurrency
  int checkpoint_every = 1;
  bool uniform_random_first = false;
  // When nonempty, batches are drawn from this fixed set (all of one size)
  // instead of freshly generated instances.
  std::vector<TspInstance> fixed_instances;

  void validate() const;
};

// Learning rate schedule: step_size * decay^(epoch-1).
double step_size_at(const TrainConfig& config, int epoch);

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_csv;
  int final_epoch = 0;
};

// Full training loop (one size sampled per epoch, fresh instances per
// step). Writes checkpoint_ep####.ckpt per epoch, final.ckpt, and a
// metrics.csv with one line per step:
//   epoch,step,n,mean_raw_len,mean_improved_len,step_size
TrainResult train(const TrainConfig& config, const std::filesystem::path& out_dir);

// Checkpoints: versioned binary file, self-describing tensor directory in a
// JSON header followed by raw little-endian doubles.
void save_checkpoint(const std::filesystem::path& path, const PolicyModel& model, int epoch,
                     uint64_t master_seed);

struct LoadedCheckpoint {
  PolicyModel model;
  int epoch = 0;
  uint64_t master_seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tspkit
