#include "pacq/diag/train.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <string>

#include "pacq/eval/metrics.hpp"
#include "pacq/prob/pmf.hpp"

namespace pacq::diag {

using num::Tensor;

namespace {

struct Batch {
  std::vector<const synth::StudyRecord*> studies;
  std::vector<std::uint8_t> masks;
  std::vector<int> y_as;
  std::vector<double> y_ef;
};

void append_sample(Batch& b, const synth::StudyRecord& s, std::uint32_t mask_bits, int n) {
  b.studies.push_back(&s);
  for (int v = 0; v < n; ++v) b.masks.push_back((mask_bits >> v) & 1u);
  b.y_as.push_back(s.y_as_class);
  b.y_ef.push_back(s.y_ef);
}

// Subset size uniform over 0..n, then a uniform subset of that size. Matches
// the episode state distribution better than uniform-over-subsets and gives
// the zero-view prior enough visits to calibrate.
std::uint32_t random_subset(Rng& rng, int n, std::vector<int>& scratch) {
  int size = static_cast<int>(rng.index(static_cast<std::uint64_t>(n) + 1));
  rng.shuffle(scratch);
  std::uint32_t bits = 0;
  for (int i = 0; i < size; ++i) bits |= 1u << scratch[i];
  return bits;
}

Tensor batch_views(const EncoderConfig& cfg, const Batch& b) {
  int n = cfg.n_views, d = cfg.input_dim;
  int rows = static_cast<int>(b.studies.size()) * n;
  std::vector<double> flat(static_cast<std::size_t>(rows) * d, 0.0);
  for (std::size_t i = 0; i < b.studies.size(); ++i)
    for (int v = 0; v < n; ++v) {
      if (!b.masks[i * n + v]) continue;
      const double* src = &b.studies[i]->embeddings[static_cast<std::size_t>(v) * d];
      std::copy(src, src + d, &flat[(i * n + v) * static_cast<std::size_t>(d)]);
    }
  return Tensor::from(std::move(flat), rows, d);
}

std::vector<std::vector<double>> snapshot(const DiagnosticModel& m) {
  std::vector<std::vector<double>> s;
  for (const auto& p : m.parameters()) s.push_back(p.values());
  return s;
}

void restore(DiagnosticModel& m, const std::vector<std::vector<double>>& s) {
  auto ps = m.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i].values() = s[i];
}

}  // namespace

double validation_bacc(const DiagnosticModel& m, const synth::Dataset& data,
                       const std::vector<std::int64_t>& indices) {
  auto grid = prob::CategoryGrid::defaults(m.cfg.n_classes);
  std::vector<int> as_pred, as_true, ef_pred, ef_true;
  const int chunk = 256;
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    std::size_t end = std::min(indices.size(), start + chunk);
    std::vector<const synth::StudyRecord*> studies;
    for (std::size_t i = start; i < end; ++i) studies.push_back(&data.studies[indices[i]]);
    std::vector<std::uint8_t> masks(studies.size() * m.cfg.n_views, 1);
    auto joints = predict_batch(m, studies, masks);
    for (std::size_t i = 0; i < joints.size(); ++i) {
      auto [pa, pe] = prob::predicted_classes(prob::discretize(joints[i], grid));
      as_pred.push_back(pa);
      ef_pred.push_back(pe);
      as_true.push_back(studies[i]->y_as_class);
      ef_true.push_back(grid.ef_category_of(studies[i]->y_ef));
    }
  }
  double a = eval::balanced_accuracy(as_pred, as_true, grid.n_as());
  double e = eval::balanced_accuracy(ef_pred, ef_true, grid.n_ef());
  return 0.5 * (a + e);
}

TrainResult train_diagnostic(const synth::Dataset& data, const synth::DatasetSplit& split,
                             const EncoderConfig& ecfg, const TrainConfig& tcfg) {
  if (split.train.empty() || split.val.empty())
    throw ConfigError("train-diag: train and val splits must be non-empty");
  if (tcfg.epochs < 1 || tcfg.batch_size < 1 || tcfg.lr <= 0.0)
    throw ConfigError("train-diag: epochs/batch/lr must be positive");

  TrainResult res;
  res.model = init_model(ecfg, tcfg.seed);
  auto grid = prob::CategoryGrid::defaults(ecfg.n_classes);
  num::Adam opt(res.model.parameters(), tcfg.lr);
  Rng rng(tcfg.seed, "diag-train");
  const int n = ecfg.n_views;
  const std::uint32_t full_mask = (1u << n) - 1u;

  std::vector<std::int64_t> order(split.train.begin(), split.train.end());
  std::vector<int> scratch(n);
  for (int v = 0; v < n; ++v) scratch[v] = v;
  std::vector<std::vector<double>> best;
  res.best_val_bacc = -1.0;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    double progress = tcfg.epochs > 1 ? static_cast<double>(epoch) / (tcfg.epochs - 1) : 0.0;
    opt.set_lr(tcfg.lr * (1.0 - progress * (1.0 - tcfg.lr_final_frac)));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tcfg.batch_size)) {
      std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      Batch b;
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = data.studies[order[i]];
        append_sample(b, s, full_mask, n);
        if (tcfg.mask_augment) append_sample(b, s, random_subset(rng, n, scratch), n);
      }
      opt.zero_grad();
      num::Tape tape;
      try {
        num::TapeScope scope(tape);
        Tensor enc = encode_tokens(res.model, batch_views(ecfg, b), b.masks,
                                   static_cast<int>(b.studies.size()));
        HeadOut h = head_forward(res.model, enc);
        Tensor loss = num::add(
            num::scale(loss_as_batch(h, b.y_as, grid, &res.stats), tcfg.lambda_as),
            num::scale(loss_ef_batch(h, b.y_ef, &res.stats), tcfg.lambda_ef));
        epoch_loss += loss.item();
        num::backward(loss);
      } catch (const NumericError& e) {
        throw NumericError("train-diag: diverged at epoch " + std::to_string(epoch + 1) +
                           " step " + std::to_string(steps + 1) + ": " + e.what());
      }
      if (tcfg.clip_norm > 0.0) opt.clip_grad_norm(tcfg.clip_norm);
      opt.step();
      ++steps;
    }
    res.train_loss.push_back(epoch_loss / std::max(steps, 1));
    double vb = validation_bacc(res.model, data, split.val);
    res.val_bacc.push_back(vb);
    // ties go to the later epoch: equal accuracy, better-calibrated prior
    if (vb >= res.best_val_bacc) {
      res.best_val_bacc = vb;
      res.best_epoch = epoch;
      best = snapshot(res.model);
    }
    if (tcfg.log_every > 0 && (epoch + 1) % tcfg.log_every == 0) {
      std::vector<std::uint8_t> none(static_cast<std::size_t>(n), 0);
      auto empty = predict_joint(res.model, data.studies[split.val[0]], none);
      std::fprintf(stderr,
                   "[diag] epoch %d/%d loss %.4f val-bacc %.4f best %.4f@%d "
                   "empty-mu %.3f/%.3f\n",
                   epoch + 1, tcfg.epochs, res.train_loss.back(), vb, res.best_val_bacc,
                   res.best_epoch + 1, empty.mu.x, empty.mu.y);
    }
  }
  restore(res.model, best);
  res.model.frozen = true;
  return res;
}

}  // namespace pacq::diag
