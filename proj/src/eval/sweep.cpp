#include "pacq/eval/sweep.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace pacq::eval {

SweepResult sweep_lambda(const synth::Dataset& data, const synth::DatasetSplit& split,
                         const env::PredictorBase& predictor,
                         const std::vector<double>& lambdas,
                         const std::vector<std::uint64_t>& seeds, const rl::PPOConfig& base,
                         const prob::CategoryGrid& grid) {
  if (lambdas.empty() || seeds.empty())
    throw ConfigError("sweep: need at least one lambda and one seed");
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (lambdas[i] <= lambdas[i - 1])
      throw ConfigError("sweep: lambdas must be strictly ascending");

  SweepResult out;
  for (double lam : lambdas) {
    SweepRow row;
    row.lambda = lam;
    std::vector<MetricsReport> reports;
    std::vector<double> rewards;
    for (auto seed : seeds) {
      rl::PPOConfig cfg = base;
      cfg.seed = seed;
      auto sel = rl::train_selector(data, split, predictor, lam, cfg, grid);
      auto ev = eval_rl(data, split.test, predictor, sel.nets, lam, grid);
      ev.report.seed = seed;
      reports.push_back(ev.report);
      rewards.push_back(ev.mean_reward);
    }
    row.mean = mean_report(reports);
    row.stddev = std_report(reports);
    double m = 0.0;
    for (double r : rewards) m += r;
    m /= static_cast<double>(rewards.size());
    double v = 0.0;
    for (double r : rewards) v += (r - m) * (r - m);
    row.mean_reward = m;
    row.reward_std = std::sqrt(v / static_cast<double>(rewards.size()));
    out.rows.push_back(std::move(row));
  }

  // Cost-free full-study reference row.
  SweepRow full;
  full.with_rl = false;
  full.lambda = 0.0;
  int n = predictor.n_views();
  full.mean = eval_fixed_subset(data, split.test, predictor, std::vector<std::uint8_t>(n, 1),
                                grid);
  double correct = 0.0;
  for (auto id : split.test) {
    auto o = subset_outcome(data.studies[static_cast<std::size_t>(id)], predictor,
                            std::vector<std::uint8_t>(n, 1), grid);
    correct += (o.pred_as == o.y_as ? 1.0 : 0.0) + (o.pred_ef == o.y_ef ? 1.0 : 0.0);
  }
  full.mean_reward = correct / static_cast<double>(split.test.size());
  out.rows.push_back(std::move(full));
  return out;
}

std::string render_sweep(const SweepResult& sweep) {
  std::string out =
      "lambda    mean-bACC        F1-AS   F1-EF   bMAE   reward          ratio%   count\n";
  char line[200];
  for (const auto& r : sweep.rows) {
    if (r.with_rl) {
      std::snprintf(line, sizeof(line),
                    "%-8.4g  %6.2f +- %-5.2f  %6.2f  %6.2f  %5.2f  %5.2f +- %-4.2f  %6.1f  %5.2f\n",
                    r.lambda, r.mean.mean_bacc, r.stddev.mean_bacc, r.mean.f1_as, r.mean.f1_ef,
                    r.mean.bmae, r.mean_reward, r.reward_std, r.mean.ratio, r.mean.mean_count);
    } else {
      std::snprintf(line, sizeof(line),
                    "%-8s  %6.2f          %6.2f  %6.2f  %5.2f  %5.2f          %6.1f  %5.2f\n",
                    "w/o RL", r.mean.mean_bacc, r.mean.f1_as, r.mean.f1_ef, r.mean.bmae,
                    r.mean_reward, r.mean.ratio, r.mean.mean_count);
    }
    out += line;
  }
  return out;
}

std::string sweep_lines(const SweepResult& sweep) {
  std::string out;
  for (const auto& r : sweep.rows) {
    nlohmann::json j;
    j["with_rl"] = r.with_rl;
    if (r.with_rl) j["lambda"] = r.lambda;
    j["mean_bacc"] = r.mean.mean_bacc;
    j["bacc_std"] = r.stddev.mean_bacc;
    j["f1_as"] = r.mean.f1_as;
    j["f1_ef"] = r.mean.f1_ef;
    j["bmae"] = r.mean.bmae;
    j["reward"] = r.mean_reward;
    j["reward_std"] = r.reward_std;
    j["ratio"] = r.mean.ratio;
    j["count"] = r.mean.mean_count;
    j["config_hash"] = r.mean.config_hash;
    out += j.dump();
    out += "\n";
  }
  return out;
}

}  // namespace pacq::eval
