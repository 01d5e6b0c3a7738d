#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pacq/eval/evaluate.hpp"
#include "pacq/rl/ppo.hpp"

namespace pacq::eval {

struct SweepRow {
  bool with_rl = true;
  double lambda = 0.0;
  MetricsReport mean;
  MetricsReport stddev;
  double mean_reward = 0.0;  // terminal sparse reward, averaged over seeds
  double reward_std = 0.0;
};

// RL rows ascending in lambda, then one full-study "w/o RL" row.
struct SweepResult {
  std::vector<SweepRow> rows;
};

SweepResult sweep_lambda(const synth::Dataset& data, const synth::DatasetSplit& split,
                         const env::PredictorBase& predictor,
                         const std::vector<double>& lambdas,
                         const std::vector<std::uint64_t>& seeds, const rl::PPOConfig& base,
                         const prob::CategoryGrid& grid);

std::string render_sweep(const SweepResult& sweep);
std::string sweep_lines(const SweepResult& sweep);  // one JSON record per row

}  // namespace pacq::eval
