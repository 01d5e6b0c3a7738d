#include "pacq/prob/pmf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pacq::prob {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

int bin_of(const std::vector<double>& edges, double y) {
  int n = static_cast<int>(edges.size()) - 1;
  for (int i = 0; i < n - 1; ++i)
    if (y < edges[i + 1]) return i;
  return n - 1;
}
}  // namespace

CategoryGrid CategoryGrid::defaults(int k) {
  CategoryGrid g;
  g.as_edges.resize(k + 1);
  for (int i = 0; i <= k; ++i) g.as_edges[i] = static_cast<double>(i) / k;
  g.ef_edges = {0.0, 0.40, 0.50, 1.0};
  g.validate();
  return g;
}

void CategoryGrid::validate() const {
  if (as_edges.size() < 2 || ef_edges.size() < 2)
    throw ConfigError("CategoryGrid: need at least one bin per axis");
  for (std::size_t i = 1; i < as_edges.size(); ++i)
    if (!(as_edges[i] > as_edges[i - 1]))
      throw ConfigError("CategoryGrid: as_edges must be strictly increasing");
  for (std::size_t i = 1; i < ef_edges.size(); ++i)
    if (!(ef_edges[i] > ef_edges[i - 1]))
      throw ConfigError("CategoryGrid: ef_edges must be strictly increasing");
}

int CategoryGrid::as_class_of(double y) const { return bin_of(as_edges, y); }
int CategoryGrid::ef_category_of(double y) const { return bin_of(ef_edges, y); }

JointPMF discretize(const GaussianJoint& joint, const CategoryGrid& grid) {
  int k = grid.n_as(), m = grid.n_ef();
  JointPMF pmf;
  pmf.rows = k;
  pmf.cols = m;
  pmf.p.assign(static_cast<std::size_t>(k) * m, 0.0);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    double alo = i == 0 ? -kInf : grid.as_edges[i];
    double ahi = i == k - 1 ? kInf : grid.as_edges[i + 1];
    for (int j = 0; j < m; ++j) {
      double elo = j == 0 ? -kInf : grid.ef_edges[j];
      double ehi = j == m - 1 ? kInf : grid.ef_edges[j + 1];
      double mass = num::bvn_rect_prob({alo, elo}, {ahi, ehi}, joint.mu, joint.sigma);
      pmf.at(i, j) = mass;
      total += mass;
    }
  }
  if (!(total > 0.0))
    throw NumericError("discretize: joint mass vanished over the grid");
  for (auto& v : pmf.p) v /= total;
  return pmf;
}

double js_divergence(const JointPMF& a, const JointPMF& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw ShapeError("js_divergence: PMF shapes differ");
  double js = 0.0;
  for (std::size_t i = 0; i < a.p.size(); ++i) {
    double p = a.p[i], q = b.p[i];
    double m = 0.5 * (p + q);
    double t = 0.0;
    if (p > 0.0) t += 0.5 * p * std::log(p / m);
    if (q > 0.0) t += 0.5 * q * std::log(q / m);
    js += t;
  }
  return std::clamp(js, 0.0, std::log(2.0));
}

std::pair<std::vector<double>, std::vector<double>> marginals(const JointPMF& pmf) {
  std::vector<double> as(pmf.rows, 0.0), ef(pmf.cols, 0.0);
  for (int i = 0; i < pmf.rows; ++i)
    for (int j = 0; j < pmf.cols; ++j) {
      as[i] += pmf.at(i, j);
      ef[j] += pmf.at(i, j);
    }
  return {as, ef};
}

std::pair<int, int> predicted_classes(const JointPMF& pmf) {
  auto [as, ef] = marginals(pmf);
  int ai = 0, ei = 0;
  for (int i = 1; i < static_cast<int>(as.size()); ++i)
    if (as[i] > as[ai]) ai = i;
  for (int j = 1; j < static_cast<int>(ef.size()); ++j)
    if (ef[j] > ef[ei]) ei = j;
  return {ai, ei};
}

}  // namespace pacq::prob
