#pragma once

#include <cstdint>
#include <vector>

#include "pacq/env/episode.hpp"
#include "pacq/prob/pmf.hpp"
#include "pacq/synth/generator.hpp"

namespace pacq::oracle {

// Exact conjugate posterior over (y_as_value, y_ef) under the generator's
// linear-Gaussian observation model, with the label prior replaced by its
// moment-matched Gaussian. The per-view direction pairs are orthonormal, so
// the posterior stays axis-aligned.
struct BayesPosterior {
  num::Vec2 mean;
  num::Mat2 cov;

  prob::GaussianJoint joint() const { return {mean, cov}; }
};

// Moments of the label distribution implied by the grid: uniform over cells,
// Beta(2,2) within each bin.
BayesPosterior label_prior(const prob::CategoryGrid& grid);

// view_subset is a 0/1 mask over the study's views; cfg must be the true
// generator config.
BayesPosterior bayes_posterior(const synth::StudyRecord& study,
                               const std::vector<std::uint8_t>& view_subset,
                               const synth::GeneratorConfig& cfg);

std::pair<int, int> bayes_predict(const BayesPosterior& post, const prob::CategoryGrid& grid);

struct HindsightResult {
  std::vector<int> subset;  // sorted view indices
  double reward = 0.0;
};

// Enumerates all 2^N subsets through the predictor and scores each with the
// sparse episode reward. Ties prefer the smaller subset, then the
// lexicographically smaller index list.
HindsightResult hindsight_best_subset(const synth::StudyRecord& study,
                                      const env::PredictorBase& predictor, double cost_lambda,
                                      const std::vector<double>& costs,
                                      const prob::CategoryGrid& grid);

// Empirical cell frequencies from n_samples draws of the joint Gaussian.
prob::JointPMF mc_pmf(const prob::GaussianJoint& joint, const prob::CategoryGrid& grid,
                      std::int64_t n_samples, std::uint64_t seed = 0);

}  // namespace pacq::oracle
