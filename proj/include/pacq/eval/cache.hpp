#pragma once

#include <cstdint>
#include <unordered_map>

#include "pacq/env/episode.hpp"

namespace pacq::eval {

// Memoizes (study_id, mask) lookups in front of any predictor so repeated
// subset evaluations and RL rollouts skip redundant forward passes.
class SubsetCache : public env::PredictorBase {
 public:
  explicit SubsetCache(const env::PredictorBase& inner);

  prob::GaussianJoint predict(const synth::StudyRecord& study,
                              const std::vector<std::uint8_t>& mask) const override;
  int n_views() const override { return inner_->n_views(); }

  std::size_t size() const { return cache_.size(); }
  std::size_t hits() const { return hits_; }
  void clear() {
    cache_.clear();
    hits_ = 0;
  }

 private:
  const env::PredictorBase* inner_;
  mutable std::unordered_map<std::uint64_t, prob::GaussianJoint> cache_;
  mutable std::size_t hits_ = 0;
};

}  // namespace pacq::eval
