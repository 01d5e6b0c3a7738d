#pragma once

#include <utility>
#include <vector>

#include "pacq/common/errors.hpp"
#include "pacq/numerics/gaussian.hpp"

namespace pacq::prob {

// Joint Gaussian over (y_AS, y_EF) produced by the diagnostic head.
struct GaussianJoint {
  num::Vec2 mu;
  num::Mat2 sigma;
};

// AS classes are K uniform bins on [0,1]; EF categories default to the
// clinical edges 0.40 / 0.50. Bins are half-open except the last, which is
// closed at 1.
struct CategoryGrid {
  std::vector<double> as_edges;
  std::vector<double> ef_edges;

  static CategoryGrid defaults(int k = 3);

  int n_as() const { return static_cast<int>(as_edges.size()) - 1; }
  int n_ef() const { return static_cast<int>(ef_edges.size()) - 1; }
  int as_class_of(double y) const;
  int ef_category_of(double y) const;
  void validate() const;
};

struct JointPMF {
  int rows = 0;
  int cols = 0;
  std::vector<double> p;

  double& at(int i, int j) { return p[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return p[static_cast<std::size_t>(i) * cols + j]; }
};

// Integrates the joint Gaussian over every grid cell (outer bins extended to
// +-inf) and normalizes the residual integration error away.
JointPMF discretize(const GaussianJoint& joint, const CategoryGrid& grid);

// Natural-log Jensen-Shannon divergence, in [0, ln 2].
double js_divergence(const JointPMF& a, const JointPMF& b);

// (AS marginal, EF marginal): row and column sums.
std::pair<std::vector<double>, std::vector<double>> marginals(const JointPMF& pmf);

// Argmax of each marginal; ties break toward the lower index.
std::pair<int, int> predicted_classes(const JointPMF& pmf);

}  // namespace pacq::prob
