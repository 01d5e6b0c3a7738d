#include "pacq/rl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pacq/common/binio.hpp"
#include "pacq/eval/metrics.hpp"

namespace pacq::rl {

using num::Tensor;

void PPOConfig::validate() const {
  if (clip_eps <= 0.0 || clip_eps >= 1.0)
    throw ConfigError("ppo: clip epsilon must lie in (0,1)");
  if (epochs_per_update < 1 || minibatch < 1 || train_epochs < 1 || hidden < 1)
    throw ConfigError("ppo: epochs/minibatch/hidden must be positive");
  if (lr <= 0.0 || entropy_coef < 0.0 || value_coef < 0.0)
    throw ConfigError("ppo: lr must be positive, coefficients non-negative");
  if (gae_lambda < 0.0 || gae_lambda > 1.0 || gamma < 0.0 || gamma > 1.0)
    throw ConfigError("ppo: gamma and gae lambda must lie in [0,1]");
  if (dense_scale < 0.0 || grad_clip < 0.0 || episodes_per_epoch < 0)
    throw ConfigError("ppo: dense scale, grad clip and episode count must be non-negative");
}

void compute_advantages(RolloutBuffer& buf, double gamma, double gae_lambda,
                        bool normalize) {
  const auto& e = buf.entries;
  if (e.empty()) throw ConfigError("ppo: cannot compute advantages of an empty buffer");
  if (!e.back().done)
    throw ConfigError("ppo: buffer must contain only complete episodes");
  std::size_t n = e.size();
  buf.advantages.assign(n, 0.0);
  buf.returns.assign(n, 0.0);
  double gae = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    double next_value = e[i].done ? 0.0 : e[i + 1].value;
    double not_done = e[i].done ? 0.0 : 1.0;
    double delta = e[i].reward + gamma * next_value * not_done - e[i].value;
    gae = delta + gamma * gae_lambda * not_done * gae;
    buf.advantages[i] = gae;
    buf.returns[i] = gae + e[i].value;
  }
  if (!normalize || n < 2) return;
  double mean = std::accumulate(buf.advantages.begin(), buf.advantages.end(), 0.0) /
                static_cast<double>(n);
  double var = 0.0;
  for (double a : buf.advantages) var += (a - mean) * (a - mean);
  double sd = std::sqrt(var / static_cast<double>(n));
  if (sd < 1e-8) return;
  for (double& a : buf.advantages) a = (a - mean) / sd;
}

PPOStats ppo_update(const RolloutBuffer& buf, PolicyNets& nets, num::Adam& opt,
                    const PPOConfig& cfg, Rng& rng) {
  cfg.validate();
  if (buf.entries.empty()) throw ConfigError("ppo: update on an empty buffer");
  if (buf.advantages.size() != buf.entries.size())
    throw ConfigError("ppo: compute_advantages must run before ppo_update");

  std::size_t n = buf.entries.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  PPOStats stats;
  long stat_batches = 0;
  for (int pass = 0; pass < cfg.epochs_per_update; ++pass) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.minibatch)) {
      std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.minibatch));
      int m = static_cast<int>(end - start);

      std::vector<double> feats, oldlp, adv, ret;
      std::vector<std::uint8_t> legal;
      std::vector<int> actions;
      feats.reserve(static_cast<std::size_t>(m) * nets.input_dim);
      for (std::size_t k = start; k < end; ++k) {
        const auto& entry = buf.entries[order[k]];
        feats.insert(feats.end(), entry.features.begin(), entry.features.end());
        legal.insert(legal.end(), entry.legal.begin(), entry.legal.end());
        actions.push_back(entry.action);
        oldlp.push_back(entry.log_prob);
        adv.push_back(buf.advantages[order[k]]);
        ret.push_back(buf.returns[order[k]]);
      }
      Tensor states = Tensor::from(std::move(feats), m, nets.input_dim);
      Tensor old_logp = Tensor::from(std::move(oldlp), m, 1);
      Tensor advt = Tensor::from(std::move(adv), m, 1);
      Tensor rett = Tensor::from(std::move(ret), m, 1);

      opt.zero_grad();
      double pl = 0.0, vl = 0.0, ent = 0.0, clipped_count = 0.0;
      try {
        num::Tape tape;
        num::TapeScope scope(tape);
        Tensor logits = actor_logits(nets, states);
        Tensor logp_all = num::masked_log_softmax_rows(logits, legal);
        Tensor logp = num::select_cols_per_row(logp_all, actions);
        Tensor ratio = num::exp(num::sub(logp, old_logp));
        Tensor clipped = num::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        Tensor surr =
            num::minimum(num::mul(ratio, advt), num::mul(clipped, advt));
        Tensor policy_loss = num::neg(num::mean_all(surr));

        Tensor probs = num::masked_softmax_rows(logits, legal);
        Tensor entropy =
            num::neg(num::mean_all(num::sum_cols(num::mul(probs, logp_all))));

        Tensor values = critic_values(nets, states);
        Tensor value_loss = num::mean_all(num::square(num::sub(values, rett)));

        Tensor total = num::add(
            policy_loss, num::sub(num::scale(value_loss, cfg.value_coef),
                                  num::scale(entropy, cfg.entropy_coef)));
        pl = policy_loss.item();
        vl = value_loss.item();
        ent = entropy.item();
        for (int r = 0; r < m; ++r)
          if (std::fabs(ratio.at(r, 0) - 1.0) > cfg.clip_eps) clipped_count += 1.0;
        num::backward(total);
      } catch (const NumericError& err) {
        throw NumericError(std::string("ppo: diverged during update: ") + err.what());
      }
      if (cfg.grad_clip > 0.0) opt.clip_grad_norm(cfg.grad_clip);
      opt.step();

      stats.policy_loss += pl;
      stats.value_loss += vl;
      stats.entropy += ent;
      stats.clip_fraction += clipped_count / m;
      ++stat_batches;
    }
  }
  if (stat_batches > 0) {
    stats.policy_loss /= static_cast<double>(stat_batches);
    stats.value_loss /= static_cast<double>(stat_batches);
    stats.entropy /= static_cast<double>(stat_batches);
    stats.clip_fraction /= static_cast<double>(stat_batches);
  }
  return stats;
}

double policy_bacc(const PolicyNets& nets, const synth::Dataset& data,
                   const std::vector<std::int64_t>& indices,
                   const env::PredictorBase& predictor, double cost_lambda,
                   const prob::CategoryGrid& grid) {
  auto costs = env::unit_costs(predictor.n_views());
  Rng unused(0, "argmax");
  env::PolicyFn greedy = [&](const env::EnvState& s) {
    return act(nets, s, unused, true).action;
  };
  std::vector<int> as_pred, as_true, ef_pred, ef_true;
  for (auto i : indices) {
    auto tr = env::run_episode(data.studies[i], predictor, greedy, cost_lambda, costs, grid);
    as_pred.push_back(tr.pred_as);
    ef_pred.push_back(tr.pred_ef);
    as_true.push_back(tr.y_as);
    ef_true.push_back(tr.y_ef_cat);
  }
  return 0.5 * (eval::balanced_accuracy(as_pred, as_true, grid.n_as()) +
                eval::balanced_accuracy(ef_pred, ef_true, grid.n_ef()));
}

namespace {

std::vector<std::vector<double>> snapshot(const PolicyNets& nets) {
  std::vector<std::vector<double>> s;
  for (const auto& p : nets.parameters()) s.push_back(p.values());
  return s;
}

void restore(PolicyNets& nets, const std::vector<std::vector<double>>& s) {
  auto ps = nets.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i].values() = s[i];
}

}  // namespace

SelectorResult train_selector(const synth::Dataset& data, const synth::DatasetSplit& split,
                              const env::PredictorBase& predictor, double cost_lambda,
                              const PPOConfig& cfg, const prob::CategoryGrid& grid) {
  cfg.validate();
  if (split.train.empty() || split.val.empty())
    throw ConfigError("train-policy: train and val splits must be non-empty");
  int n = predictor.n_views();
  if (n != data.cfg.n_views)
    throw ConfigError("train-policy: predictor and dataset disagree on view count");
  int d = data.cfg.embed_dim;
  auto costs = env::unit_costs(n);

  SelectorResult res;
  res.nets = init_policy(n * d + n, n + 1, cfg.hidden, cfg.seed);
  num::Adam opt(res.nets.parameters(), cfg.lr);
  Rng rng(cfg.seed, "selector");

  std::vector<std::int64_t> order(split.train.begin(), split.train.end());
  std::vector<std::vector<double>> best;
  res.best_val_bacc = -1.0;

  for (int epoch = 0; epoch < cfg.train_epochs; ++epoch) {
    rng.shuffle(order);
    std::size_t episodes = cfg.episodes_per_epoch > 0
                               ? static_cast<std::size_t>(cfg.episodes_per_epoch)
                               : order.size();
    RolloutBuffer buf;
    double count_sum = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
      const auto& study = data.studies[order[e % order.size()]];
      env::EnvState s = env::reset(study, predictor, grid);
      for (;;) {
        ActResult ar = act(res.nets, s, rng, false);
        env::Transition tr = env::step(s, ar.action, cost_lambda, costs);
        double reward =
            tr.done ? tr.sparse_reward : cfg.dense_scale * tr.dense_reward;
        buf.entries.push_back({s.policy_input(), legal_actions(s), ar.action_index,
                               ar.log_prob, reward, ar.value, tr.done});
        if (tr.done) {
          count_sum += s.t;
          break;
        }
        s = std::move(tr.next);
      }
    }
    res.mean_count.push_back(count_sum / static_cast<double>(episodes));
    compute_advantages(buf, cfg.gamma, cfg.gae_lambda);
    PPOStats st = ppo_update(buf, res.nets, opt, cfg, rng);

    double vb = policy_bacc(res.nets, data, split.val, predictor, cost_lambda, grid);
    res.val_bacc.push_back(vb);
    if (vb >= res.best_val_bacc) {
      res.best_val_bacc = vb;
      res.best_epoch = epoch;
      best = snapshot(res.nets);
    }
    if (cfg.log_every > 0 && (epoch + 1) % cfg.log_every == 0)
      std::fprintf(stderr,
                   "[ppo] epoch %d/%d count %.2f val-bacc %.4f best %.4f@%d "
                   "pi %.4f v %.4f H %.3f clip %.2f\n",
                   epoch + 1, cfg.train_epochs, res.mean_count.back(), vb,
                   res.best_val_bacc, res.best_epoch + 1, st.policy_loss, st.value_loss,
                   st.entropy, st.clip_fraction);
  }
  restore(res.nets, best);
  return res;
}

namespace {
constexpr char kMagic[4] = {'P', 'S', 'E', 'L'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

void save_policy(const PolicyNets& nets, const PPOConfig& cfg, double cost_lambda,
                 const std::string& path) {
  BinWriter w(path);
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.mark_crc_start();
  w.u32(static_cast<std::uint32_t>(nets.input_dim));
  w.u32(static_cast<std::uint32_t>(nets.n_actions));
  w.u32(static_cast<std::uint32_t>(nets.hidden));
  w.f64(cfg.clip_eps);
  w.u32(static_cast<std::uint32_t>(cfg.epochs_per_update));
  w.u32(static_cast<std::uint32_t>(cfg.minibatch));
  w.f64(cfg.lr);
  w.f64(cfg.entropy_coef);
  w.f64(cfg.value_coef);
  w.f64(cfg.gae_lambda);
  w.f64(cfg.gamma);
  w.u32(static_cast<std::uint32_t>(cfg.train_epochs));
  w.u32(static_cast<std::uint32_t>(cfg.episodes_per_epoch));
  w.f64(cfg.dense_scale);
  w.f64(cfg.grad_clip);
  w.u64(cfg.seed);
  w.f64(cost_lambda);
  for (const auto& p : nets.parameters()) w.f64_array(p.values());
  w.write_crc();
  w.close();
}

PolicyCheckpoint load_policy(const std::string& path) {
  BinReader r(path);
  r.expect_magic(kMagic, "policy checkpoint");
  std::uint16_t version = r.u16();
  if (version != kVersion)
    throw DataError(DataError::Kind::Version,
                    "policy checkpoint: unsupported version " + std::to_string(version));
  r.mark_crc_start();
  PolicyCheckpoint out;
  int input_dim = static_cast<int>(r.u32());
  int n_actions = static_cast<int>(r.u32());
  int hidden = static_cast<int>(r.u32());
  out.cfg.clip_eps = r.f64();
  out.cfg.epochs_per_update = static_cast<int>(r.u32());
  out.cfg.minibatch = static_cast<int>(r.u32());
  out.cfg.lr = r.f64();
  out.cfg.entropy_coef = r.f64();
  out.cfg.value_coef = r.f64();
  out.cfg.gae_lambda = r.f64();
  out.cfg.gamma = r.f64();
  out.cfg.train_epochs = static_cast<int>(r.u32());
  out.cfg.episodes_per_epoch = static_cast<int>(r.u32());
  out.cfg.dense_scale = r.f64();
  out.cfg.grad_clip = r.f64();
  out.cfg.seed = r.u64();
  out.cfg.hidden = hidden;
  out.cost_lambda = r.f64();
  out.nets = init_policy(input_dim, n_actions, hidden, 0);
  for (auto& p : out.nets.parameters()) {
    auto vals = r.f64_array();
    if (vals.size() != p.size())
      throw DataError(DataError::Kind::Dimension,
                      "policy checkpoint: weight blob shape mismatch");
    p.values() = std::move(vals);
  }
  r.check_crc("policy checkpoint");
  return out;
}

}  // namespace pacq::rl
