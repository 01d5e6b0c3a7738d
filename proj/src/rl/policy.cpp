#include "pacq/rl/policy.hpp"

#include <cmath>

#include "pacq/common/errors.hpp"

namespace pacq::rl {

using num::Tensor;

std::vector<Tensor> PolicyNets::parameters() const {
  return {a1, ab1, a2, ab2, a3, ab3, c1, cb1, c2, cb2, c3, cb3};
}

PolicyNets init_policy(int input_dim, int n_actions, int hidden, std::uint64_t seed) {
  if (input_dim < 1 || n_actions < 2 || hidden < 1)
    throw ConfigError("policy: input_dim/n_actions/hidden must be positive");
  PolicyNets p;
  p.input_dim = input_dim;
  p.n_actions = n_actions;
  p.hidden = hidden;
  Rng rng(seed, "policy-init");
  p.a1 = Tensor::xavier_uniform(input_dim, hidden, rng);
  p.ab1 = Tensor::zeros(1, hidden, true);
  p.a2 = Tensor::xavier_uniform(hidden, hidden, rng);
  p.ab2 = Tensor::zeros(1, hidden, true);
  p.a3 = Tensor::xavier_uniform(hidden, n_actions, rng);
  p.ab3 = Tensor::zeros(1, n_actions, true);
  p.c1 = Tensor::xavier_uniform(input_dim, hidden, rng);
  p.cb1 = Tensor::zeros(1, hidden, true);
  p.c2 = Tensor::xavier_uniform(hidden, hidden, rng);
  p.cb2 = Tensor::zeros(1, hidden, true);
  p.c3 = Tensor::xavier_uniform(hidden, 1, rng);
  p.cb3 = Tensor::zeros(1, 1, true);
  return p;
}

namespace {

Tensor mlp(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2, const Tensor& w3, const Tensor& b3) {
  Tensor h1 = num::tanh(num::add_rowvec(num::matmul(x, w1), b1));
  Tensor h2 = num::tanh(num::add_rowvec(num::matmul(h1, w2), b2));
  return num::add_rowvec(num::matmul(h2, w3), b3);
}

}  // namespace

Tensor actor_logits(const PolicyNets& nets, const Tensor& states) {
  if (states.cols() != nets.input_dim)
    throw ShapeError("policy: state feature width does not match input_dim");
  return mlp(states, nets.a1, nets.ab1, nets.a2, nets.ab2, nets.a3, nets.ab3);
}

Tensor critic_values(const PolicyNets& nets, const Tensor& states) {
  if (states.cols() != nets.input_dim)
    throw ShapeError("policy: state feature width does not match input_dim");
  return mlp(states, nets.c1, nets.cb1, nets.c2, nets.cb2, nets.c3, nets.cb3);
}

std::vector<std::uint8_t> legal_actions(const env::EnvState& state) {
  std::vector<std::uint8_t> legal(state.mask.size() + 1, 0);
  for (std::size_t v = 0; v < state.mask.size(); ++v) legal[v] = state.mask[v] ? 0 : 1;
  legal.back() = 1;
  return legal;
}

ActResult act(const PolicyNets& nets, const env::EnvState& state, Rng& rng, bool argmax) {
  auto legal = legal_actions(state);
  if (static_cast<int>(legal.size()) != nets.n_actions)
    throw ShapeError("policy: state action count does not match n_actions");
  Tensor x = Tensor::from(state.policy_input(), 1, nets.input_dim);
  Tensor logits = actor_logits(nets, x);
  Tensor probs = num::masked_softmax(logits, legal);

  int chosen = -1;
  if (argmax) {
    double best = -1.0;
    for (int a = 0; a < nets.n_actions; ++a)
      if (legal[a] && probs.at(0, a) > best) {
        best = probs.at(0, a);
        chosen = a;
      }
  } else {
    double u = rng.uniform();
    double acc = 0.0;
    for (int a = 0; a < nets.n_actions; ++a) {
      if (!legal[a]) continue;
      acc += probs.at(0, a);
      if (u <= acc) {
        chosen = a;
        break;
      }
    }
    if (chosen < 0) {  // guard against cumulative rounding at u ~ 1
      for (int a = nets.n_actions - 1; a >= 0; --a)
        if (legal[a]) {
          chosen = a;
          break;
        }
    }
  }

  ActResult out;
  out.action_index = chosen;
  out.action = chosen == nets.n_actions - 1 ? env::Action::stop() : env::Action::select(chosen);
  out.log_prob = std::log(probs.at(0, chosen));
  out.value = critic_values(nets, x).item();
  return out;
}

}  // namespace pacq::rl
