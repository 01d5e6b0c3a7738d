#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pacq/prob/pmf.hpp"
#include "pacq/rl/policy.hpp"
#include "pacq/synth/generator.hpp"

namespace pacq::rl {

struct PPOConfig {
  double clip_eps = 0.2;
  int epochs_per_update = 4;
  int minibatch = 256;
  double lr = 3e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double gae_lambda = 0.95;
  double gamma = 1.0;
  int train_epochs = 50;
  int episodes_per_epoch = 0;  // 0 means size of the training split
  double dense_scale = 1.0;    // rescales the dense reward stream
  double grad_clip = 0.5;      // global norm ceiling per update step, 0 disables
  int hidden = 64;
  std::uint64_t seed = 1;
  int log_every = 0;

  void validate() const;
};

struct BufEntry {
  std::vector<double> features;
  std::vector<std::uint8_t> legal;
  int action = 0;
  double log_prob = 0.0;
  double reward = 0.0;  // scaled dense, plus the terminal sparse at Stop
  double value = 0.0;
  bool done = false;
};

struct RolloutBuffer {
  std::vector<BufEntry> entries;
  std::vector<double> advantages;
  std::vector<double> returns;

  void clear() {
    entries.clear();
    advantages.clear();
    returns.clear();
  }
};

// GAE over concatenated episodes (done flags mark boundaries). Advantages
// are normalized to mean 0 / std 1 unless the batch is degenerate or
// normalize is false.
void compute_advantages(RolloutBuffer& buf, double gamma, double gae_lambda,
                        bool normalize = true);

struct PPOStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

PPOStats ppo_update(const RolloutBuffer& buf, PolicyNets& nets, num::Adam& opt,
                    const PPOConfig& cfg, Rng& rng);

// Mean bACC over the two tasks of argmax-mode episodes on the indexed studies.
double policy_bacc(const PolicyNets& nets, const synth::Dataset& data,
                   const std::vector<std::int64_t>& indices,
                   const env::PredictorBase& predictor, double cost_lambda,
                   const prob::CategoryGrid& grid);

struct SelectorResult {
  PolicyNets nets;  // best-validation checkpoint
  std::vector<double> val_bacc;
  std::vector<double> mean_count;  // acquired views per training episode
  int best_epoch = 0;
  double best_val_bacc = 0.0;
};

SelectorResult train_selector(const synth::Dataset& data, const synth::DatasetSplit& split,
                              const env::PredictorBase& predictor, double cost_lambda,
                              const PPOConfig& cfg, const prob::CategoryGrid& grid);

struct PolicyCheckpoint {
  PolicyNets nets;
  PPOConfig cfg;
  double cost_lambda = 0.0;
};

void save_policy(const PolicyNets& nets, const PPOConfig& cfg, double cost_lambda,
                 const std::string& path);
PolicyCheckpoint load_policy(const std::string& path);

}  // namespace pacq::rl
