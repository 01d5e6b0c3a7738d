#include "pacq/eval/cache.hpp"

#include "pacq/common/errors.hpp"

namespace pacq::eval {

SubsetCache::SubsetCache(const env::PredictorBase& inner) : inner_(&inner) {
  if (inner.n_views() > 32)
    throw ConfigError("subset cache: view-set keys support at most 32 views");
}

prob::GaussianJoint SubsetCache::predict(const synth::StudyRecord& study,
                                         const std::vector<std::uint8_t>& mask) const {
  int n = inner_->n_views();
  if (static_cast<int>(mask.size()) != n)
    throw ConfigError("subset cache: mask size must match n_views");
  std::uint64_t bits = 0;
  for (int v = 0; v < n; ++v)
    if (mask[v]) bits |= 1ull << v;
  std::uint64_t key = (static_cast<std::uint64_t>(study.study_id) << n) | bits;

  auto it = cache_.find(key);
  if (it != cache_.end()) {
    ++hits_;
    return it->second;
  }
  auto joint = inner_->predict(study, mask);
  cache_.emplace(key, joint);
  return joint;
}

}  // namespace pacq::eval
