#pragma once

#include <cstdint>
#include <vector>

#include "tspkit/autodiff.hpp"
#include "tspkit/core.hpp"
#include "tspkit/rng.hpp"

namespace tspkit {

struct ModelConfig {
  int hidden = 128;      // embedding width H
  int gnn_layers = 3;

  void validate() const {
    if (hidden < 1) throw std::invalid_argument("ModelConfig: hidden must be >= 1");
    if (gnn_layers < 0) throw std::invalid_argument("ModelConfig: gnn_layers must be >= 0");
  }
};

enum class DecodeMode { Greedy, Sample };

// One decoded tour with the log-probability the policy assigned to its own
// action choices (the fixed first city excluded) and its raw length.
struct Trajectory {
  Tour tour;
  double log_prob_sum = 0.0;
  double raw_length = 0.0;
};

// Constructive policy over city-selection actions: a gated GNN embeds the
// whole city set, an MLP embeds the last selected city, and an attention
// decoder scores the remaining cities.
class PolicyModel {
 public:
  PolicyModel(ModelConfig config, uint64_t seed);
  PolicyModel(ModelConfig config, ad::ParameterStore store);

  static std::vector<ad::ParamSpec> parameter_specs(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  // Whole-instance node embeddings [N, H]. Requires N >= 2 (the neighbor
  // aggregation divides by N-1).
  ad::Value encode_graph(ad::Tape& tape, const TspInstance& instance) const;

  // Last-selected-city embedding [1, H] (MLP 2 -> H -> 2H -> H, ReLU on the
  // hidden layers, identity output).
  ad::Value encode_last_city(ad::Tape& tape, Point coords) const;

  // Selection probabilities over the N cities: visited entries are exactly
  // 0, the rest sum to 1. Throws when every city is visited.
  ad::Value action_distribution(ad::Tape& tape, ad::Value node_embs, ad::Value last_emb,
                                const std::vector<uint8_t>& visited) const;

  // Decodes a complete tour. Forward-only; no gradients are recorded.
  Trajectory rollout(const TspInstance& instance, DecodeMode mode, Rng& rng) const;

  // Same, but recorded on the caller's tape; *log_prob_root receives the
  // scalar sum of chosen-action log-probabilities for backward().
  Trajectory rollout_traced(ad::Tape& tape, const TspInstance& instance, DecodeMode mode,
                            Rng& rng, ad::Value* log_prob_root) const;

  // Log-probability of re-selecting a fixed tour's actions, recorded on the
  // caller's tape.
  ad::Value trace_log_prob(ad::Tape& tape, const TspInstance& instance,
                           const Tour& tour) const;

  // When set, the first city is drawn uniformly instead of fixed to city 0.
  bool uniform_random_first = false;

 private:
  struct SlotIds;
  ad::Value decode_probs(ad::Tape& tape, ad::Value projected_embs, ad::Value last_emb,
                         const std::vector<uint8_t>& visited) const;

  ModelConfig config_;
  ad::ParameterStore params_;
  // cached slot indices; rebuilt whenever the store layout is (re)created
  std::vector<int> gnn_self_, gnn_agg_w_, gnn_agg_b_, gnn_gate_;
  int input_proj_ = -1;
  int mlp_w1_ = -1, mlp_b1_ = -1, mlp_w2_ = -1, mlp_b2_ = -1, mlp_w3_ = -1, mlp_b3_ = -1;
  int dec_node_w_ = -1, dec_last_w_ = -1, dec_score_w_ = -1;
  void cache_slots();
};

}  // namespace tspkit
