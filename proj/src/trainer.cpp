#include "tspkit/trainer.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <thread>

namespace tspkit {

namespace {

// seed-derivation tags for the independent random streams of a run
enum StreamTag : uint64_t {
  kTagInit = 1,
  kTagCurriculum = 2,
  kTagInstances = 3,
  kTagStep = 4,
  kTagFixedPick = 5,
  kTagGreedy = 6,
};

void run_indexed(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::clamp(threads, 1, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

class SgdOptimizer final : public Optimizer {
 public:
  void step(ad::ParameterStore& params, const ad::GradBuffer& grads, double lr) override {
    for (int s = 0; s < params.slot_count(); ++s) {
      ad::Tensor& value = params.value(s);
      for (int i = 0; i < value.size(); ++i) value.data[i] -= lr * grads[s].data[i];
    }
  }
};

class AdamOptimizer final : public Optimizer {
 public:
  void step(ad::ParameterStore& params, const ad::GradBuffer& grads, double lr) override {
    if (!initialized_) {
      m_ = ad::GradBuffer(params);
      v_ = ad::GradBuffer(params);
      initialized_ = true;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (int s = 0; s < params.slot_count(); ++s) {
      ad::Tensor& value = params.value(s);
      for (int i = 0; i < value.size(); ++i) {
        const double g = grads[s].data[i];
        double& m = m_[s].data[i];
        double& v = v_[s].data[i];
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g * g;
        value.data[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + kEpsilon);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;
  ad::GradBuffer m_, v_;
  bool initialized_ = false;
  long t_ = 0;
};

}  // namespace

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Adam:
      return std::make_unique<AdamOptimizer>();
    case OptimizerKind::Sgd:
      return std::make_unique<SgdOptimizer>();
  }
  throw std::invalid_argument("make_optimizer: unknown kind");
}

double clip_global_norm(ad::GradBuffer& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  const double norm = grads.global_norm();
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double factor = max_norm / norm;
  grads.scale(factor);
  return factor;
}

std::vector<double> curriculum_distribution(int epoch, double sigma, int n_min, int n_max) {
  if (epoch < 1) throw std::invalid_argument("curriculum_distribution: epoch must be >= 1");
  if (!(sigma > 0.0))
    throw std::invalid_argument("curriculum_distribution: sigma must be > 0");
  if (n_min > n_max) throw std::invalid_argument("curriculum_distribution: empty size range");
  const int count = n_max - n_min + 1;
  std::vector<double> g(count);
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma);
  for (int k = 0; k < count; ++k) {
    const double z = (static_cast<double>(k + n_min) - epoch) / sigma;
    g[k] = norm * std::exp(-0.5 * z * z);
  }
  double max_g = g[0];
  for (double v : g) max_g = std::max(max_g, v);
  double total = 0.0;
  std::vector<double> p(count);
  for (int k = 0; k < count; ++k) {
    p[k] = std::exp(g[k] - max_g);
    total += p[k];
  }
  for (double& v : p) v /= total;
  return p;
}

StepStats policy_gradient_step(const PolicyModel& model, std::span<const TspInstance> batch,
                               const LocalSearchConfig& search, uint64_t step_seed,
                               ad::GradBuffer& grad_out, const StepOptions& options) {
  if (batch.empty()) throw std::invalid_argument("policy_gradient_step: empty batch");
  const int n = batch[0].n();
  for (const TspInstance& instance : batch)
    if (instance.n() != n)
      throw std::invalid_argument("policy_gradient_step: mixed instance sizes in batch");
  search.validate();
  const int batch_size = static_cast<int>(batch.size());
  const int threads = std::max(1, options.threads);
  const bool self_critic = options.baseline == BaselineMode::CentralSelfCritic;
  const bool batch_coupled = self_critic ||
                             options.baseline == BaselineMode::SearchedReturn ||
                             options.center_weights;

  struct PerInstance {
    Tour sampled;
    double raw = 0.0;
    double improved = 0.0;
    double weight = 0.0;
  };
  std::vector<PerInstance> work(batch_size);

  auto forward_instance = [&](int b, Rng& rng) {
    const Trajectory traj = model.rollout(batch[b], DecodeMode::Sample, rng);
    PerInstance& w = work[b];
    w.sampled = traj.tour;
    w.raw = traj.raw_length;
    if (options.search_in_training) {
      const Tour improved = combined_local_search(batch[b], traj.tour, search, rng);
      w.improved = tour_length(batch[b], improved);
    } else {
      w.improved = w.raw;
    }
  };

  // Waves of private gradient buffers merged in batch order keep the
  // floating-point accumulation identical for every thread count.
  const int wave = std::min(std::max(1, threads) * 4, batch_size);
  std::vector<ad::GradBuffer> buffers;
  buffers.reserve(wave);
  for (int i = 0; i < wave; ++i) buffers.emplace_back(model.params());

  auto backward_waves = [&](const std::function<void(int, ad::GradBuffer&)>& fn) {
    for (int start = 0; start < batch_size; start += wave) {
      const int count = std::min(wave, batch_size - start);
      run_indexed(count, threads, [&](int offset) {
        buffers[offset].zero();
        fn(start + offset, buffers[offset]);
      });
      for (int offset = 0; offset < count; ++offset) grad_out.add(buffers[offset]);
    }
  };

  if (!batch_coupled) {
    // Per-instance weights: sample, search and backpropagate in one pass.
    backward_waves([&](int b, ad::GradBuffer& buffer) {
      Rng rng(derive_seed(step_seed, {static_cast<uint64_t>(b)}));
      ad::Tape tape(&model.params(), &buffer);
      ad::Value log_prob{};
      const Trajectory traj =
          model.rollout_traced(tape, batch[b], DecodeMode::Sample, rng, &log_prob);
      PerInstance& w = work[b];
      w.sampled = traj.tour;
      w.raw = traj.raw_length;
      if (options.search_in_training) {
        const Tour improved = combined_local_search(batch[b], traj.tour, search, rng);
        w.improved = tour_length(batch[b], improved);
      } else {
        w.improved = w.raw;
      }
      w.weight = options.baseline == BaselineMode::PolicyRollout
                     ? w.improved + w.raw
                     : w.improved - w.raw;
      if (w.weight != 0.0) tape.backward(log_prob, w.weight / batch_size);
    });
  } else {
    // Batch-coupled weights (centered searched return, or the centered
    // greedy baseline): forward everything, fix the weights, then replay
    // the sampled actions for gradients.
    std::vector<double> greedy_scores(self_critic ? batch_size : 0);
    run_indexed(batch_size, threads, [&](int b) {
      Rng rng(derive_seed(step_seed, {static_cast<uint64_t>(b)}));
      forward_instance(b, rng);
      if (self_critic) {
        Rng greedy_rng(derive_seed(step_seed, {static_cast<uint64_t>(b), kTagGreedy}));
        const Trajectory greedy = model.rollout(batch[b], DecodeMode::Greedy, greedy_rng);
        if (options.search_in_training) {
          const Tour improved_greedy =
              combined_local_search(batch[b], greedy.tour, search, greedy_rng);
          greedy_scores[b] = tour_length(batch[b], improved_greedy);
        } else {
          greedy_scores[b] = greedy.raw_length;
        }
      }
    });
    if (self_critic) {
      double mean_diff = 0.0;
      for (int b = 0; b < batch_size; ++b) mean_diff += work[b].improved - greedy_scores[b];
      mean_diff /= batch_size;
      for (int b = 0; b < batch_size; ++b)
        work[b].weight = (work[b].improved - greedy_scores[b]) - mean_diff;
    } else {
      // raw weight per mode, then the batch mean comes off (a valid
      // baseline: it leaves the expected gradient unchanged)
      for (PerInstance& w : work) {
        switch (options.baseline) {
          case BaselineMode::SearchedReturn:
            w.weight = w.improved;
            break;
          case BaselineMode::PolicyRollout:
            w.weight = w.improved + w.raw;
            break;
          case BaselineMode::ImprovementWeighted:
            w.weight = w.improved - w.raw;
            break;
          case BaselineMode::CentralSelfCritic:
            break;  // handled above
        }
      }
      double mean_weight = 0.0;
      for (const PerInstance& w : work) mean_weight += w.weight;
      mean_weight /= batch_size;
      for (PerInstance& w : work) w.weight -= mean_weight;
    }

    backward_waves([&](int b, ad::GradBuffer& buffer) {
      if (work[b].weight == 0.0) return;
      ad::Tape tape(&model.params(), &buffer);
      const ad::Value root = model.trace_log_prob(tape, batch[b], work[b].sampled);
      tape.backward(root, work[b].weight / batch_size);
    });
  }

  StepStats stats;
  for (const PerInstance& w : work) {
    stats.mean_raw_length += w.raw;
    stats.mean_improved_length += w.improved;
  }
  stats.mean_raw_length /= batch_size;
  stats.mean_improved_length /= batch_size;
  stats.mean_improvement = stats.mean_improved_length - stats.mean_raw_length;
  return stats;
}

void TrainConfig::validate() const {
  if (epochs < 1 || steps_per_epoch < 1 || batch_size < 1)
    throw std::invalid_argument("TrainConfig: counts must be positive");
  if (!(step_size > 0.0)) throw std::invalid_argument("TrainConfig: step_size must be > 0");
  if (!(decay > 0.0 && decay <= 1.0))
    throw std::invalid_argument("TrainConfig: decay must be in (0, 1]");
  if (!(curriculum_sigma > 0.0))
    throw std::invalid_argument("TrainConfig: curriculum_sigma must be > 0");
  if (n_min < 2 || n_min > n_max)
    throw std::invalid_argument("TrainConfig: need 2 <= n_min <= n_max");
  if (threads < 0) throw std::invalid_argument("TrainConfig: threads must be >= 0");
  if (checkpoint_every < 1)
    throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 1");
  model.validate();
  search.validate();
  if (!fixed_instances.empty()) {
    const int n0 = fixed_instances[0].n();
    if (n0 < 2) throw std::invalid_argument("TrainConfig: fixed instances need N >= 2");
    for (const TspInstance& instance : fixed_instances) {
      check_instance(instance);
      if (instance.n() != n0)
        throw std::invalid_argument("TrainConfig: fixed instances must share one size");
    }
  }
}

double step_size_at(const TrainConfig& config, int epoch) {
  return config.step_size * std::pow(config.decay, static_cast<double>(epoch - 1));
}

TrainResult train(const TrainConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    throw std::runtime_error("train: cannot create output directory '" + out_dir.string() +
                             "': " + ec.message());

  PolicyModel model(config.model, derive_seed(config.master_seed, {kTagInit}));
  model.uniform_random_first = config.uniform_random_first;
  auto optimizer = make_optimizer(config.optimizer);
  const int threads =
      config.threads > 0
          ? config.threads
          : std::max(1u, std::thread::hardware_concurrency());

  const std::filesystem::path metrics_path = out_dir / "metrics.csv";
  std::ofstream metrics(metrics_path);
  if (!metrics)
    throw std::runtime_error("train: cannot open metrics log '" + metrics_path.string() + "'");
  metrics << "epoch,step,n,mean_raw_len,mean_improved_len,step_size\n";

  auto checkpoint_name = [](int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "checkpoint_ep%04d.ckpt", epoch);
    return std::string(buf);
  };
  save_checkpoint(out_dir / checkpoint_name(0), model, 0, config.master_seed);

  std::vector<TspInstance> batch(config.batch_size);
  char line[160];
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    int n_epoch;
    if (!config.fixed_instances.empty()) {
      n_epoch = config.fixed_instances[0].n();
    } else if (config.use_curriculum) {
      const std::vector<double> p = curriculum_distribution(epoch, config.curriculum_sigma,
                                                            config.n_min, config.n_max);
      Rng rng(derive_seed(config.master_seed, {kTagCurriculum, static_cast<uint64_t>(epoch)}));
      n_epoch = config.n_min + static_cast<int>(rng.categorical(p));
    } else {
      n_epoch = config.n_max;
    }
    const double lr = step_size_at(config, epoch);

    for (int step = 1; step <= config.steps_per_epoch; ++step) {
      if (!config.fixed_instances.empty()) {
        Rng pick(derive_seed(config.master_seed, {kTagFixedPick, static_cast<uint64_t>(epoch),
                                                  static_cast<uint64_t>(step)}));
        for (int b = 0; b < config.batch_size; ++b)
          batch[b] = config.fixed_instances[pick.below(config.fixed_instances.size())];
      } else {
        for (int b = 0; b < config.batch_size; ++b)
          batch[b] = generate_instance(
              n_epoch,
              derive_seed(config.master_seed, {kTagInstances, static_cast<uint64_t>(epoch),
                                               static_cast<uint64_t>(step),
                                               static_cast<uint64_t>(b)}));
      }

      model.params().zero_grads();
      StepOptions step_options{config.baseline, config.search_in_training,
                               config.center_weights, threads};
      const uint64_t step_seed = derive_seed(
          config.master_seed,
          {kTagStep, static_cast<uint64_t>(epoch), static_cast<uint64_t>(step)});
      const StepStats stats = policy_gradient_step(model, batch, config.search, step_seed,
                                                   model.params().grads(), step_options);
      if (config.clip_norm > 0.0) clip_global_norm(model.params().grads(), config.clip_norm);
      optimizer->step(model.params(), model.params().grads(), lr);

      std::snprintf(line, sizeof(line), "%d,%d,%d,%.6f,%.6f,%.9g\n", epoch, step, n_epoch,
                    stats.mean_raw_length, stats.mean_improved_length, lr);
      metrics << line;
    }

    if (epoch % config.checkpoint_every == 0 || epoch == config.epochs)
      save_checkpoint(out_dir / checkpoint_name(epoch), model, epoch, config.master_seed);
  }

  const std::filesystem::path final_path = out_dir / "final.ckpt";
  save_checkpoint(final_path, model, config.epochs, config.master_seed);
  metrics.flush();
  if (!metrics)
    throw std::runtime_error("train: failed writing metrics log '" + metrics_path.string() +
                             "'");
  return TrainResult{final_path, metrics_path, config.epochs};
}

namespace {

constexpr char kCheckpointMagic[8] = {'T', 'S', 'P', 'K', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyModel& model, int epoch,
                     uint64_t master_seed) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["model"] = {{"hidden", model.config().hidden},
                     {"gnn_layers", model.config().gnn_layers}};
  header["epoch"] = epoch;
  header["master_seed"] = master_seed;
  header["uniform_random_first"] = model.uniform_random_first;
  nlohmann::json tensors = nlohmann::json::array();
  const ad::ParameterStore& params = model.params();
  for (int s = 0; s < params.slot_count(); ++s) {
    tensors.push_back({{"name", params.name(s)},
                       {"rows", params.value(s).rows},
                       {"cols", params.value(s).cols}});
  }
  header["tensors"] = std::move(tensors);
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("save_checkpoint: cannot open '" + path.string() + "'");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (int s = 0; s < params.slot_count(); ++s) {
    const ad::Tensor& t = params.value(s);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  out.flush();
  if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("load_checkpoint: cannot open '" + path.string() + "'");
  auto fail = [&path](const std::string& why) -> std::runtime_error {
    return std::runtime_error("load_checkpoint: " + why + " in '" + path.string() + "'");
  };

  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw fail("not a checkpoint file");
  uint32_t version = 0;
  if (!in.read(reinterpret_cast<char*>(&version), sizeof(version))) throw fail("truncated header");
  if (version != kCheckpointVersion)
    throw fail("unsupported format version " + std::to_string(version));
  uint64_t header_len = 0;
  if (!in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len)))
    throw fail("truncated header");
  if (header_len > (64u << 20)) throw fail("implausible header length");
  std::string header_str(header_len, '\0');
  if (!in.read(header_str.data(), static_cast<std::streamsize>(header_len)))
    throw fail("truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("corrupt header: ") + e.what());
  }

  ModelConfig config;
  LoadedCheckpoint result{PolicyModel(ModelConfig{1, 0}, 0)};
  try {
    config.hidden = header.at("model").at("hidden").get<int>();
    config.gnn_layers = header.at("model").at("gnn_layers").get<int>();
    result.epoch = header.at("epoch").get<int>();
    result.master_seed = header.at("master_seed").get<uint64_t>();

    ad::ParameterStore store;
    for (const auto& entry : header.at("tensors")) {
      const std::string name = entry.at("name").get<std::string>();
      const int rows = entry.at("rows").get<int>();
      const int cols = entry.at("cols").get<int>();
      if (rows < 1 || cols < 1) throw fail("invalid tensor shape for '" + name + "'");
      ad::Tensor t(rows, cols);
      if (!in.read(reinterpret_cast<char*>(t.data.data()),
                   static_cast<std::streamsize>(t.data.size() * sizeof(double))))
        throw fail("truncated tensor payload for '" + name + "'");
      store.add_slot(name, std::move(t));
    }
    store.finalize_grads();
    result.model = PolicyModel(config, std::move(store));
    result.model.uniform_random_first = header.value("uniform_random_first", false);
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("corrupt header: ") + e.what());
  }
  return result;
}

}  // namespace tspkit
