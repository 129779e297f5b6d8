#include "tspkit/policy.hpp"

#include <cmath>
#include <string>

namespace tspkit {

using ad::ParamInit;
using ad::ParamSpec;
using ad::Tape;
using ad::Tensor;
using ad::Value;

std::vector<ParamSpec> PolicyModel::parameter_specs(const ModelConfig& config) {
  config.validate();
  const int h = config.hidden;
  std::vector<ParamSpec> specs;
  specs.push_back({"input_proj", 2, h});
  for (int t = 0; t < config.gnn_layers; ++t) {
    const std::string prefix = "gnn" + std::to_string(t) + ".";
    specs.push_back({prefix + "self", h, h});
    specs.push_back({prefix + "agg_w", h, h});
    specs.push_back({prefix + "agg_b", 1, h});
    specs.push_back({prefix + "gate", 1, 1, ParamInit::Zero});
  }
  specs.push_back({"mlp.w1", 2, h});
  specs.push_back({"mlp.b1", 1, h});
  specs.push_back({"mlp.w2", h, 2 * h});
  specs.push_back({"mlp.b2", 1, 2 * h});
  specs.push_back({"mlp.w3", 2 * h, h});
  specs.push_back({"mlp.b3", 1, h});
  specs.push_back({"dec.node_w", h, h});
  specs.push_back({"dec.last_w", h, h});
  specs.push_back({"dec.score_w", 1, h});
  return specs;
}

PolicyModel::PolicyModel(ModelConfig config, uint64_t seed)
    : config_(config),
      params_(ad::ParameterStore::init(parameter_specs(config), seed)) {
  cache_slots();
}

PolicyModel::PolicyModel(ModelConfig config, ad::ParameterStore store)
    : config_(config), params_(std::move(store)) {
  config_.validate();
  for (const ParamSpec& spec : parameter_specs(config_)) {
    const int slot = params_.find(spec.name);
    if (slot < 0)
      throw std::invalid_argument("PolicyModel: missing parameter '" + spec.name + "'");
    const Tensor& t = params_.value(slot);
    if (t.rows != spec.rows || t.cols != spec.cols)
      throw std::invalid_argument("PolicyModel: shape mismatch for '" + spec.name + "'");
  }
  cache_slots();
}

void PolicyModel::cache_slots() {
  input_proj_ = params_.find("input_proj");
  gnn_self_.clear();
  gnn_agg_w_.clear();
  gnn_agg_b_.clear();
  gnn_gate_.clear();
  for (int t = 0; t < config_.gnn_layers; ++t) {
    const std::string prefix = "gnn" + std::to_string(t) + ".";
    gnn_self_.push_back(params_.find(prefix + "self"));
    gnn_agg_w_.push_back(params_.find(prefix + "agg_w"));
    gnn_agg_b_.push_back(params_.find(prefix + "agg_b"));
    gnn_gate_.push_back(params_.find(prefix + "gate"));
  }
  mlp_w1_ = params_.find("mlp.w1");
  mlp_b1_ = params_.find("mlp.b1");
  mlp_w2_ = params_.find("mlp.w2");
  mlp_b2_ = params_.find("mlp.b2");
  mlp_w3_ = params_.find("mlp.w3");
  mlp_b3_ = params_.find("mlp.b3");
  dec_node_w_ = params_.find("dec.node_w");
  dec_last_w_ = params_.find("dec.last_w");
  dec_score_w_ = params_.find("dec.score_w");
}

Value PolicyModel::encode_graph(Tape& tape, const TspInstance& instance) const {
  check_instance(instance);
  const int n = instance.n();
  if (n < 2)
    throw std::invalid_argument("encode_graph: N must be >= 2");
  Tensor coords(n, 2);
  for (int i = 0; i < n; ++i) {
    coords.at(i, 0) = instance.coords[i].x;
    coords.at(i, 1) = instance.coords[i].y;
  }
  Value x = tape.matmul(tape.input(std::move(coords)), tape.param(input_proj_));
  for (int t = 0; t < config_.gnn_layers; ++t) {
    Value self_map = tape.matmul(x, tape.param(gnn_self_[t]));
    // neighbor aggregation over the complete graph: sum of the other rows
    // of X/(N-1), shared affine map, ReLU
    Value scaled = tape.affine(x, 1.0 / (n - 1), 0.0);
    Value neighbor = tape.relu(tape.add_rowvec(
        tape.matmul(tape.sum_other_rows(scaled), tape.param(gnn_agg_w_[t])),
        tape.param(gnn_agg_b_[t])));
    Value gate = tape.logistic(tape.param(gnn_gate_[t]));
    x = tape.add(tape.smul(gate, self_map),
                 tape.smul(tape.affine(gate, -1.0, 1.0), neighbor));
  }
  return x;
}

Value PolicyModel::encode_last_city(Tape& tape, Point coords) const {
  const double xy[2] = {coords.x, coords.y};
  Value h = tape.input(std::span<const double>(xy, 2));
  h = tape.relu(tape.add_rowvec(tape.matmul(h, tape.param(mlp_w1_)), tape.param(mlp_b1_)));
  h = tape.relu(tape.add_rowvec(tape.matmul(h, tape.param(mlp_w2_)), tape.param(mlp_b2_)));
  return tape.add_rowvec(tape.matmul(h, tape.param(mlp_w3_)), tape.param(mlp_b3_));
}

Value PolicyModel::decode_probs(Tape& tape, Value projected_embs, Value last_emb,
                                const std::vector<uint8_t>& visited) const {
  // scores u_j = w . tanh(X_j Theta_g + Theta_m x); visited j masked out
  Value shifted = tape.matmul_nt(last_emb, tape.param(dec_last_w_));
  Value scores = tape.matmul_nt(tape.tanh(tape.add_rowvec(projected_embs, shifted)),
                                tape.param(dec_score_w_));
  return tape.masked_softmax(scores, visited);
}

Value PolicyModel::action_distribution(Tape& tape, Value node_embs, Value last_emb,
                                       const std::vector<uint8_t>& visited) const {
  if (static_cast<size_t>(node_embs.rows) != visited.size())
    throw std::invalid_argument("action_distribution: visited mask size mismatch");
  Value projected = tape.matmul(node_embs, tape.param(dec_node_w_));
  return decode_probs(tape, projected, last_emb, visited);
}

Trajectory PolicyModel::rollout(const TspInstance& instance, DecodeMode mode,
                                Rng& rng) const {
  Tape tape(&params_);
  return rollout_traced(tape, instance, mode, rng, nullptr);
}

Trajectory PolicyModel::rollout_traced(Tape& tape, const TspInstance& instance,
                                       DecodeMode mode, Rng& rng,
                                       Value* log_prob_root) const {
  const int n = instance.n();
  if (n < 2) throw std::invalid_argument("rollout: N must be >= 2");

  Value embs = encode_graph(tape, instance);
  // X Theta_g does not depend on the decoding step; compute it once
  Value projected = tape.matmul(embs, tape.param(dec_node_w_));

  std::vector<uint8_t> visited(n, 0);
  Trajectory traj;
  traj.tour.order.reserve(n);
  const int first =
      uniform_random_first ? static_cast<int>(rng.below(n)) : 0;
  traj.tour.order.push_back(first);
  visited[first] = 1;

  Value log_prob_sum{};
  bool have_sum = false;
  for (int step = 1; step < n; ++step) {
    Value last_emb = encode_last_city(tape, instance.coords[traj.tour.order.back()]);
    Value probs = decode_probs(tape, projected, last_emb, visited);
    const Tensor& p = tape.value(probs);

    int action = -1;
    if (mode == DecodeMode::Greedy) {
      double best = -1.0;
      for (int j = 0; j < n; ++j)
        if (!visited[j] && p.data[j] > best) {
          best = p.data[j];
          action = j;
        }
    } else {
      action = static_cast<int>(rng.categorical(p.data));
    }

    Value lp = tape.log(tape.pick(probs, action));
    log_prob_sum = have_sum ? tape.add(log_prob_sum, lp) : lp;
    have_sum = true;
    visited[action] = 1;
    traj.tour.order.push_back(action);
  }

  traj.log_prob_sum = tape.scalar(log_prob_sum);
  traj.raw_length = tour_length(instance, traj.tour);
  if (log_prob_root != nullptr) *log_prob_root = log_prob_sum;
  return traj;
}

Value PolicyModel::trace_log_prob(Tape& tape, const TspInstance& instance,
                                  const Tour& tour) const {
  const int n = instance.n();
  if (n < 2) throw std::invalid_argument("trace_log_prob: N must be >= 2");
  if (auto violation = validate_tour(tour.order, n))
    throw std::invalid_argument("trace_log_prob: " + *violation);

  Value embs = encode_graph(tape, instance);
  Value projected = tape.matmul(embs, tape.param(dec_node_w_));
  std::vector<uint8_t> visited(n, 0);
  visited[tour.order[0]] = 1;
  Value total{};
  for (int step = 1; step < n; ++step) {
    Value last_emb = encode_last_city(tape, instance.coords[tour.order[step - 1]]);
    Value probs = decode_probs(tape, projected, last_emb, visited);
    Value lp = tape.log(tape.pick(probs, tour.order[step]));
    total = (step == 1) ? lp : tape.add(total, lp);
    visited[tour.order[step]] = 1;
  }
  return total;
}

}  // namespace tspkit
