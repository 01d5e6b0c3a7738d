#include "pacq/oracle/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "pacq/common/rng.hpp"

namespace pacq::oracle {

namespace {

// Mean and variance of the bin-mixture marginal: uniform bin choice,
// Beta(2,2) within the bin (variance width^2/20).
void axis_moments(const std::vector<double>& edges, double& mean, double& var) {
  int n = static_cast<int>(edges.size()) - 1;
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double lo = edges[i], hi = edges[i + 1];
    double bm = 0.5 * (lo + hi);
    double bv = (hi - lo) * (hi - lo) / 20.0;
    m += bm;
    m2 += bv + bm * bm;
  }
  mean = m / n;
  var = m2 / n - mean * mean;
}

}  // namespace

BayesPosterior label_prior(const prob::CategoryGrid& grid) {
  grid.validate();
  BayesPosterior p;
  double va = 0.0, ve = 0.0;
  axis_moments(grid.as_edges, p.mean.x, va);
  axis_moments(grid.ef_edges, p.mean.y, ve);
  p.cov = {va, 0.0, 0.0, ve};
  return p;
}

BayesPosterior bayes_posterior(const synth::StudyRecord& study,
                               const std::vector<std::uint8_t>& view_subset,
                               const synth::GeneratorConfig& cfg) {
  cfg.validate();
  int n = cfg.n_views, dim = cfg.embed_dim;
  if (static_cast<int>(view_subset.size()) != n)
    throw ConfigError("bayes: view subset size must match n_views");
  if (study.embeddings.size() != static_cast<std::size_t>(n) * dim)
    throw ConfigError("bayes: study embedding shape does not match config");
  if (static_cast<int>(study.qualities.size()) != n)
    throw ConfigError("bayes: study is missing per-view qualities");

  auto prior = label_prior(prob::CategoryGrid::defaults(cfg.n_classes));
  auto dirs = synth::view_directions(cfg);

  // Diagonal natural parameters; the likelihood never couples the two axes.
  double lam1 = 1.0 / prior.cov.a11, lam2 = 1.0 / prior.cov.a22;
  double eta1 = lam1 * prior.mean.x, eta2 = lam2 * prior.mean.y;
  double inv_noise = 1.0 / (cfg.noise_std * cfg.noise_std);

  for (int v = 0; v < n; ++v) {
    if (!view_subset[v]) continue;
    double q = study.qualities[v];
    double s_as = 2.0 * q * cfg.view_signal[v].w_as;
    double s_ef = 2.0 * q * cfg.view_signal[v].w_ef;
    const double* a = &dirs.a[static_cast<std::size_t>(v) * dim];
    const double* b = &dirs.b[static_cast<std::size_t>(v) * dim];
    const double* e = &study.embeddings[static_cast<std::size_t>(v) * dim];
    double pa = 0.0, pb = 0.0;
    for (int i = 0; i < dim; ++i) {
      pa += a[i] * e[i];
      pb += b[i] * e[i];
    }
    // Offset from mapping y in [0,1] to the signal 2y-1.
    lam1 += s_as * s_as * inv_noise;
    lam2 += s_ef * s_ef * inv_noise;
    eta1 += s_as * (pa + q * cfg.view_signal[v].w_as) * inv_noise;
    eta2 += s_ef * (pb + q * cfg.view_signal[v].w_ef) * inv_noise;
  }

  BayesPosterior post;
  post.cov = {1.0 / lam1, 0.0, 0.0, 1.0 / lam2};
  post.mean = {eta1 / lam1, eta2 / lam2};
  return post;
}

std::pair<int, int> bayes_predict(const BayesPosterior& post, const prob::CategoryGrid& grid) {
  return prob::predicted_classes(prob::discretize(post.joint(), grid));
}

HindsightResult hindsight_best_subset(const synth::StudyRecord& study,
                                      const env::PredictorBase& predictor, double cost_lambda,
                                      const std::vector<double>& costs,
                                      const prob::CategoryGrid& grid) {
  int n = predictor.n_views();
  if (n > 12) throw ConfigError("hindsight: enumeration limited to 12 views");
  if (static_cast<int>(costs.size()) != n)
    throw ConfigError("hindsight: costs size must match n_views");
  if (cost_lambda < 0.0) throw ConfigError("hindsight: cost lambda must be >= 0");

  int y_as = study.y_as_class;
  int y_ef = grid.ef_category_of(study.y_ef);

  HindsightResult best;
  bool have = false;
  std::vector<std::uint8_t> mask(n);
  std::vector<int> subset;
  for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
    subset.clear();
    double cost = 0.0;
    for (int v = 0; v < n; ++v) {
      mask[v] = (bits >> v) & 1u;
      if (mask[v]) {
        subset.push_back(v);
        cost += costs[v];
      }
    }
    auto pred = prob::predicted_classes(prob::discretize(predictor.predict(study, mask), grid));
    double reward =
        (pred.first == y_as ? 1.0 : 0.0) + (pred.second == y_ef ? 1.0 : 0.0) - cost_lambda * cost;

    bool better;
    if (!have) {
      better = true;
    } else if (reward != best.reward) {
      better = reward > best.reward;
    } else if (subset.size() != best.subset.size()) {
      better = subset.size() < best.subset.size();
    } else {
      better = std::lexicographical_compare(subset.begin(), subset.end(), best.subset.begin(),
                                            best.subset.end());
    }
    if (better) {
      best.subset = subset;
      best.reward = reward;
      have = true;
    }
  }
  return best;
}

prob::JointPMF mc_pmf(const prob::GaussianJoint& joint, const prob::CategoryGrid& grid,
                      std::int64_t n_samples, std::uint64_t seed) {
  grid.validate();
  if (n_samples < 10000) throw ConfigError("mc_pmf: need at least 1e4 samples");

  double s1 = std::sqrt(std::max(0.0, joint.sigma.a11));
  double s2 = std::sqrt(std::max(0.0, joint.sigma.a22));
  double rho = 0.0;
  if (s1 > 0.0 && s2 > 0.0) rho = std::clamp(joint.sigma.a12 / (s1 * s2), -1.0, 1.0);
  double tail = std::sqrt(1.0 - rho * rho);

  prob::JointPMF pmf;
  pmf.rows = grid.n_as();
  pmf.cols = grid.n_ef();
  pmf.p.assign(static_cast<std::size_t>(pmf.rows) * pmf.cols, 0.0);

  Rng rng(seed, "mc-pmf");
  for (std::int64_t k = 0; k < n_samples; ++k) {
    double z1 = rng.normal(), z2 = rng.normal();
    double x = joint.mu.x + s1 * z1;
    double y = joint.mu.y + s2 * (rho * z1 + tail * z2);
    pmf.at(grid.as_class_of(x), grid.ef_category_of(y)) += 1.0;
  }
  for (double& p : pmf.p) p /= static_cast<double>(n_samples);
  return pmf;
}

}  // namespace pacq::oracle
