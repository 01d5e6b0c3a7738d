#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pacq/common/rng.hpp"
#include "pacq/env/episode.hpp"
#include "pacq/numerics/tensor.hpp"

namespace pacq::rl {

// Actor and critic are separate 3-layer MLPs (two tanh hidden layers) over
// the flattened masked embeddings plus the raw mask bits.
struct PolicyNets {
  int input_dim = 0;
  int n_actions = 0;  // N + 1, last index is Stop
  int hidden = 64;
  num::Tensor a1, ab1, a2, ab2, a3, ab3;
  num::Tensor c1, cb1, c2, cb2, c3, cb3;

  std::vector<num::Tensor> parameters() const;
};

PolicyNets init_policy(int input_dim, int n_actions, int hidden, std::uint64_t seed);

num::Tensor actor_logits(const PolicyNets& nets, const num::Tensor& states);
num::Tensor critic_values(const PolicyNets& nets, const num::Tensor& states);

// Legality bits for the N+1 actions of a state: unacquired views, then Stop
// (always legal).
std::vector<std::uint8_t> legal_actions(const env::EnvState& state);

struct ActResult {
  env::Action action;
  int action_index = 0;  // 0..N selects, N is Stop
  double log_prob = 0.0;
  double value = 0.0;
};

// Samples from the masked softmax; argmax mode is deterministic (ties to the
// lower index) and ignores rng.
ActResult act(const PolicyNets& nets, const env::EnvState& state, Rng& rng,
              bool argmax = false);

}  // namespace pacq::rl
