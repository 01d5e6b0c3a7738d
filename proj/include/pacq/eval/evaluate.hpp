#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pacq/env/episode.hpp"
#include "pacq/prob/pmf.hpp"
#include "pacq/rl/policy.hpp"
#include "pacq/synth/generator.hpp"

namespace pacq::eval {

// bACC / F1 / ratio in percent, bMAE in EF percentage points.
struct MetricsReport {
  double bacc_as = 0.0;
  double bacc_ef = 0.0;
  double mean_bacc = 0.0;
  double f1_as = 0.0;
  double f1_ef = 0.0;
  double bmae = 0.0;
  double ratio = 0.0;
  double mean_count = 0.0;
  long n_studies = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

// Terminal prediction of one study under some acquisition scheme.
struct StudyOutcome {
  int pred_as = 0;
  int pred_ef = 0;
  double mu_ef = 0.0;
  int y_as = 0;
  int y_ef = 0;
  double y_ef_value = 0.0;
  int count = 0;
};

MetricsReport make_report(const std::vector<StudyOutcome>& outcomes, int n_views,
                          const prob::CategoryGrid& grid);

// Field-wise mean / population std over runs (metadata taken from the first).
MetricsReport mean_report(const std::vector<MetricsReport>& rs);
MetricsReport std_report(const std::vector<MetricsReport>& rs);

StudyOutcome subset_outcome(const synth::StudyRecord& study, const env::PredictorBase& predictor,
                            const std::vector<std::uint8_t>& mask,
                            const prob::CategoryGrid& grid);

MetricsReport eval_fixed_subset(const synth::Dataset& data,
                                const std::vector<std::int64_t>& ids,
                                const env::PredictorBase& predictor,
                                const std::vector<std::uint8_t>& mask,
                                const prob::CategoryGrid& grid);

struct RandomKResult {
  std::vector<MetricsReport> runs;
  MetricsReport mean;
  MetricsReport stddev;
};

RandomKResult eval_random_k(const synth::Dataset& data, const std::vector<std::int64_t>& ids,
                            const env::PredictorBase& predictor, int k, int n_runs,
                            std::uint64_t seed, const prob::CategoryGrid& grid);

struct PopwiseResult {
  std::vector<int> subset;     // chosen on validation, sorted indices
  double val_mean_bacc = 0.0;  // percent
  MetricsReport report;        // on test
};

// Enumerates all C(N,k) subsets on validation, applies the argmax (ties to
// the lexicographically smaller index list) to every test study.
PopwiseResult eval_popwise_k(const synth::Dataset& data,
                             const std::vector<std::int64_t>& val_ids,
                             const std::vector<std::int64_t>& test_ids,
                             const env::PredictorBase& predictor, int k,
                             const prob::CategoryGrid& grid);

struct RLEvalResult {
  MetricsReport report;
  std::vector<env::EpisodeTrace> traces;
  double mean_reward = 0.0;  // mean terminal sparse reward
};

RLEvalResult eval_rl(const synth::Dataset& data, const std::vector<std::int64_t>& ids,
                     const env::PredictorBase& predictor, const rl::PolicyNets& nets,
                     double cost_lambda, const prob::CategoryGrid& grid, bool argmax = true,
                     std::uint64_t seed = 0);

// Same policy ranked greedily but forced to acquire exactly k views.
RLEvalResult eval_rl_budget(const synth::Dataset& data, const std::vector<std::int64_t>& ids,
                            const env::PredictorBase& predictor, const rl::PolicyNets& nets,
                            int k, double cost_lambda, const prob::CategoryGrid& grid);

std::uint64_t fnv1a64(const std::string& text);

// One structured record per report and a fixed-width table over labeled rows.
std::string report_line(const std::string& label, const MetricsReport& r);
std::string render_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace pacq::eval
