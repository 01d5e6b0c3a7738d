#include "pacq/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"
#include "pacq/common/rng.hpp"
#include "pacq/eval/metrics.hpp"

namespace pacq::eval {

using num::Tensor;

MetricsReport make_report(const std::vector<StudyOutcome>& outcomes, int n_views,
                          const prob::CategoryGrid& grid) {
  if (outcomes.empty()) throw ShapeError("make_report: no study outcomes");
  if (n_views < 1) throw ConfigError("make_report: n_views must be positive");

  std::vector<int> pa, ya, pe, ye, cats;
  std::vector<double> mu, yv;
  double count = 0.0;
  for (const auto& o : outcomes) {
    pa.push_back(o.pred_as);
    ya.push_back(o.y_as);
    pe.push_back(o.pred_ef);
    ye.push_back(o.y_ef);
    mu.push_back(o.mu_ef);
    yv.push_back(o.y_ef_value);
    cats.push_back(o.y_ef);
    count += o.count;
  }
  MetricsReport r;
  r.bacc_as = 100.0 * balanced_accuracy(pa, ya, grid.n_as());
  r.bacc_ef = 100.0 * balanced_accuracy(pe, ye, grid.n_ef());
  r.mean_bacc = 0.5 * (r.bacc_as + r.bacc_ef);
  r.f1_as = 100.0 * weighted_f1(pa, ya, grid.n_as());
  r.f1_ef = 100.0 * weighted_f1(pe, ye, grid.n_ef());
  r.bmae = bmae(mu, yv, cats);
  r.n_studies = static_cast<long>(outcomes.size());
  r.mean_count = count / static_cast<double>(outcomes.size());
  r.ratio = 100.0 * r.mean_count / n_views;
  return r;
}

namespace {

template <typename Get>
double field_mean(const std::vector<MetricsReport>& rs, Get get) {
  double s = 0.0;
  for (const auto& r : rs) s += get(r);
  return s / static_cast<double>(rs.size());
}

template <typename Get>
double field_std(const std::vector<MetricsReport>& rs, Get get) {
  double m = field_mean(rs, get);
  double v = 0.0;
  for (const auto& r : rs) v += (get(r) - m) * (get(r) - m);
  return std::sqrt(v / static_cast<double>(rs.size()));
}

template <typename Agg>
MetricsReport aggregate(const std::vector<MetricsReport>& rs, Agg agg) {
  if (rs.empty()) throw ShapeError("report aggregate: no reports");
  MetricsReport out;
  out.bacc_as = agg(rs, [](const MetricsReport& r) { return r.bacc_as; });
  out.bacc_ef = agg(rs, [](const MetricsReport& r) { return r.bacc_ef; });
  out.mean_bacc = agg(rs, [](const MetricsReport& r) { return r.mean_bacc; });
  out.f1_as = agg(rs, [](const MetricsReport& r) { return r.f1_as; });
  out.f1_ef = agg(rs, [](const MetricsReport& r) { return r.f1_ef; });
  out.bmae = agg(rs, [](const MetricsReport& r) { return r.bmae; });
  out.ratio = agg(rs, [](const MetricsReport& r) { return r.ratio; });
  out.mean_count = agg(rs, [](const MetricsReport& r) { return r.mean_count; });
  out.n_studies = rs.front().n_studies;
  out.seed = rs.front().seed;
  out.config_hash = rs.front().config_hash;
  return out;
}

const synth::StudyRecord& study_by_id(const synth::Dataset& data, std::int64_t id) {
  if (id < 0 || id >= static_cast<std::int64_t>(data.studies.size()))
    throw ConfigError("eval: study id out of range");
  const auto& s = data.studies[static_cast<std::size_t>(id)];
  if (s.study_id != id) throw DataError(DataError::Kind::Other, "eval: study ids not contiguous");
  return s;
}

}  // namespace

MetricsReport mean_report(const std::vector<MetricsReport>& rs) {
  return aggregate(rs, [](const auto& v, auto get) { return field_mean(v, get); });
}

MetricsReport std_report(const std::vector<MetricsReport>& rs) {
  auto out = aggregate(rs, [](const auto& v, auto get) { return field_std(v, get); });
  out.seed = 0;
  return out;
}

StudyOutcome subset_outcome(const synth::StudyRecord& study, const env::PredictorBase& predictor,
                            const std::vector<std::uint8_t>& mask,
                            const prob::CategoryGrid& grid) {
  auto joint = predictor.predict(study, mask);
  auto pred = prob::predicted_classes(prob::discretize(joint, grid));
  StudyOutcome o;
  o.pred_as = pred.first;
  o.pred_ef = pred.second;
  o.mu_ef = joint.mu.y;
  o.y_as = study.y_as_class;
  o.y_ef = grid.ef_category_of(study.y_ef);
  o.y_ef_value = study.y_ef;
  o.count = static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  return o;
}

MetricsReport eval_fixed_subset(const synth::Dataset& data,
                                const std::vector<std::int64_t>& ids,
                                const env::PredictorBase& predictor,
                                const std::vector<std::uint8_t>& mask,
                                const prob::CategoryGrid& grid) {
  std::vector<StudyOutcome> outs;
  outs.reserve(ids.size());
  for (auto id : ids) outs.push_back(subset_outcome(study_by_id(data, id), predictor, mask, grid));
  return make_report(outs, predictor.n_views(), grid);
}

RandomKResult eval_random_k(const synth::Dataset& data, const std::vector<std::int64_t>& ids,
                            const env::PredictorBase& predictor, int k, int n_runs,
                            std::uint64_t seed, const prob::CategoryGrid& grid) {
  int n = predictor.n_views();
  if (k < 1 || k > n) throw ConfigError("random-k: k must lie in [1, n_views]");
  if (n_runs < 1) throw ConfigError("random-k: need at least one run");

  RandomKResult res;
  std::vector<int> pool(n);
  for (int run = 0; run < n_runs; ++run) {
    Rng rng(seed, "random-k", static_cast<std::uint64_t>(run));
    std::vector<StudyOutcome> outs;
    outs.reserve(ids.size());
    for (auto id : ids) {
      std::iota(pool.begin(), pool.end(), 0);
      std::vector<std::uint8_t> mask(n, 0);
      for (int j = 0; j < k; ++j) {
        std::size_t pick = j + rng.index(static_cast<std::size_t>(n - j));
        std::swap(pool[j], pool[pick]);
        mask[pool[j]] = 1;
      }
      outs.push_back(subset_outcome(study_by_id(data, id), predictor, mask, grid));
    }
    auto rep = make_report(outs, n, grid);
    rep.seed = seed;
    res.runs.push_back(rep);
  }
  res.mean = mean_report(res.runs);
  res.stddev = std_report(res.runs);
  return res;
}

PopwiseResult eval_popwise_k(const synth::Dataset& data,
                             const std::vector<std::int64_t>& val_ids,
                             const std::vector<std::int64_t>& test_ids,
                             const env::PredictorBase& predictor, int k,
                             const prob::CategoryGrid& grid) {
  int n = predictor.n_views();
  if (k < 1 || k > n) throw ConfigError("popwise-k: k must lie in [1, n_views]");
  if (val_ids.empty()) throw ConfigError("popwise-k: empty validation split");

  PopwiseResult res;
  res.val_mean_bacc = -1.0;
  std::vector<int> combo(k);
  std::iota(combo.begin(), combo.end(), 0);
  for (;;) {
    std::vector<std::uint8_t> mask(n, 0);
    for (int v : combo) mask[v] = 1;
    auto rep = eval_fixed_subset(data, val_ids, predictor, mask, grid);
    if (rep.mean_bacc > res.val_mean_bacc) {
      res.val_mean_bacc = rep.mean_bacc;
      res.subset = combo;
    }
    // next k-combination in lexicographic order
    int i = k - 1;
    while (i >= 0 && combo[i] == n - k + i) --i;
    if (i < 0) break;
    ++combo[i];
    for (int j = i + 1; j < k; ++j) combo[j] = combo[j - 1] + 1;
  }

  std::vector<std::uint8_t> best_mask(n, 0);
  for (int v : res.subset) best_mask[v] = 1;
  res.report = eval_fixed_subset(data, test_ids, predictor, best_mask, grid);
  return res;
}

RLEvalResult eval_rl(const synth::Dataset& data, const std::vector<std::int64_t>& ids,
                     const env::PredictorBase& predictor, const rl::PolicyNets& nets,
                     double cost_lambda, const prob::CategoryGrid& grid, bool argmax,
                     std::uint64_t seed) {
  if (ids.empty()) throw ConfigError("eval-rl: empty id list");
  auto costs = env::unit_costs(predictor.n_views());
  Rng rng(seed, "eval-rl");
  env::PolicyFn policy = [&](const env::EnvState& s) {
    return rl::act(nets, s, rng, argmax).action;
  };

  std::vector<env::EpisodeTrace> traces;
  std::vector<StudyOutcome> outs;
  traces.reserve(ids.size());
  double reward = 0.0;
  for (auto id : ids) {
    const auto& study = study_by_id(data, id);
    auto t = env::run_episode(study, predictor, policy, cost_lambda, costs, grid);
    StudyOutcome o;
    o.pred_as = t.pred_as;
    o.pred_ef = t.pred_ef;
    o.mu_ef = t.final_joint.mu.y;
    o.y_as = t.y_as;
    o.y_ef = t.y_ef_cat;
    o.y_ef_value = study.y_ef;
    o.count = t.acquired_count();
    outs.push_back(o);
    reward += t.sparse_reward;
    traces.push_back(std::move(t));
  }
  RLEvalResult res;
  res.report = make_report(outs, predictor.n_views(), grid);
  res.report.seed = seed;
  res.traces = std::move(traces);
  res.mean_reward = reward / static_cast<double>(ids.size());
  return res;
}

RLEvalResult eval_rl_budget(const synth::Dataset& data, const std::vector<std::int64_t>& ids,
                            const env::PredictorBase& predictor, const rl::PolicyNets& nets,
                            int k, double cost_lambda, const prob::CategoryGrid& grid) {
  int n = predictor.n_views();
  if (k < 1 || k > n) throw ConfigError("eval-rl-budget: k must lie in [1, n_views]");
  if (ids.empty()) throw ConfigError("eval-rl-budget: empty id list");
  auto costs = env::unit_costs(n);

  env::PolicyFn policy = [&](const env::EnvState& s) {
    if (s.t >= k) return env::Action::stop();
    auto feats = s.policy_input();
    Tensor logits =
        rl::actor_logits(nets, Tensor::from(std::move(feats), 1, nets.input_dim));
    int best = -1;
    for (int v = 0; v < s.n_views(); ++v) {
      if (s.mask[v]) continue;
      if (best < 0 || logits.at(0, v) > logits.at(0, best)) best = v;
    }
    return env::Action::select(best);
  };

  std::vector<env::EpisodeTrace> traces;
  std::vector<StudyOutcome> outs;
  traces.reserve(ids.size());
  double reward = 0.0;
  for (auto id : ids) {
    const auto& study = study_by_id(data, id);
    auto t = env::run_episode(study, predictor, policy, cost_lambda, costs, grid);
    StudyOutcome o;
    o.pred_as = t.pred_as;
    o.pred_ef = t.pred_ef;
    o.mu_ef = t.final_joint.mu.y;
    o.y_as = t.y_as;
    o.y_ef = t.y_ef_cat;
    o.y_ef_value = study.y_ef;
    o.count = t.acquired_count();
    outs.push_back(o);
    reward += t.sparse_reward;
    traces.push_back(std::move(t));
  }
  RLEvalResult res;
  res.report = make_report(outs, n, grid);
  res.traces = std::move(traces);
  res.mean_reward = reward / static_cast<double>(ids.size());
  return res;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string report_line(const std::string& label, const MetricsReport& r) {
  nlohmann::json j;
  j["label"] = label;
  j["bacc_as"] = r.bacc_as;
  j["bacc_ef"] = r.bacc_ef;
  j["mean_bacc"] = r.mean_bacc;
  j["f1_as"] = r.f1_as;
  j["f1_ef"] = r.f1_ef;
  j["bmae"] = r.bmae;
  j["ratio"] = r.ratio;
  j["mean_count"] = r.mean_count;
  j["n_studies"] = r.n_studies;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  return j.dump();
}

std::string render_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::string out =
      "method            bACC-AS  bACC-EF  mean-bACC  F1-AS   F1-EF   bMAE   ratio%  count\n";
  char line[160];
  for (const auto& [label, r] : rows) {
    std::snprintf(line, sizeof(line),
                  "%-17s %7.2f  %7.2f  %9.2f  %6.2f  %6.2f  %5.2f  %6.1f  %5.2f\n",
                  label.c_str(), r.bacc_as, r.bacc_ef, r.mean_bacc, r.f1_as, r.f1_ef, r.bmae,
                  r.ratio, r.mean_count);
    out += line;
  }
  return out;
}

}  // namespace pacq::eval
