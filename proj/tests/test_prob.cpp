#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "pacq/common/rng.hpp"
#include "pacq/numerics/gaussian.hpp"
#include "pacq/prob/pmf.hpp"

using namespace pacq;
using namespace pacq::prob;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

JointPMF pmf_from(std::vector<double> v, int r, int c) {
  JointPMF p;
  p.rows = r;
  p.cols = c;
  p.p = std::move(v);
  return p;
}

GaussianJoint random_joint(Rng& rng) {
  GaussianJoint j;
  j.mu = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
  double s1 = rng.uniform(0.02, 0.9), s2 = rng.uniform(0.02, 0.9);
  double rho = rng.uniform(-0.95, 0.95);
  j.sigma = {s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2};
  return j;
}
}  // namespace

TEST_CASE("grid binning") {
  auto g = CategoryGrid::defaults();
  CHECK(g.n_as() == 3);
  CHECK(g.n_ef() == 3);
  CHECK(g.as_class_of(0.0) == 0);
  CHECK(g.as_class_of(0.3333) == 0);
  CHECK(g.as_class_of(1.0 / 3.0) == 1);
  CHECK(g.as_class_of(0.65) == 1);
  CHECK(g.as_class_of(2.0 / 3.0) == 2);
  CHECK(g.as_class_of(1.0) == 2);
  CHECK(g.ef_category_of(0.39) == 0);
  CHECK(g.ef_category_of(0.40) == 1);
  CHECK(g.ef_category_of(0.4999) == 1);
  CHECK(g.ef_category_of(0.50) == 2);
  CHECK(g.ef_category_of(1.0) == 2);
}

TEST_CASE("discretize with diagonal covariance factorizes") {
  auto g = CategoryGrid::defaults();
  GaussianJoint j{{0.45, 0.48}, {0.04, 0, 0, 0.0225}};
  auto pmf = discretize(j, g);
  std::vector<double> as(3), ef(3);
  for (int i = 0; i < 3; ++i) {
    double lo = i == 0 ? -kInf : g.as_edges[i];
    double hi = i == 2 ? kInf : g.as_edges[i + 1];
    as[i] = num::normal_interval_prob(lo, hi, 0.45, 0.2);
  }
  for (int jx = 0; jx < 3; ++jx) {
    double lo = jx == 0 ? -kInf : g.ef_edges[jx];
    double hi = jx == 2 ? kInf : g.ef_edges[jx + 1];
    ef[jx] = num::normal_interval_prob(lo, hi, 0.48, 0.15);
  }
  for (int i = 0; i < 3; ++i)
    for (int jx = 0; jx < 3; ++jx)
      CHECK(pmf.at(i, jx) == doctest::Approx(as[i] * ef[jx]).epsilon(1e-8));
}

TEST_CASE("discretize point mass limit") {
  auto g = CategoryGrid::defaults();
  GaussianJoint j{{0.5, 0.45}, {1e-10, 0, 0, 1e-10}};
  auto pmf = discretize(j, g);
  CHECK(pmf.at(1, 1) == doctest::Approx(1.0).epsilon(1e-9));
  auto [as_c, ef_c] = predicted_classes(pmf);
  CHECK(as_c == 1);
  CHECK(ef_c == 1);
}

TEST_CASE("discretize AS marginal matches the CDF arithmetic") {
  auto g = CategoryGrid::defaults();
  GaussianJoint j{{0.5, 0.45}, {0.01, 0, 0, 0.01}};
  auto pmf = discretize(j, g);
  auto [as, ef] = marginals(pmf);
  CHECK(as[0] == doctest::Approx(0.0478).epsilon(2e-3));
  CHECK(as[1] == doctest::Approx(0.9044).epsilon(2e-4));
  CHECK(as[2] == doctest::Approx(0.0478).epsilon(2e-3));
  auto cls = predicted_classes(pmf);
  CHECK(cls.first == 1);
  CHECK(cls.second == 1);
}

TEST_CASE("discretize marginals equal direct 1-D integration") {
  Rng rng(77, "prob-marg");
  auto g = CategoryGrid::defaults();
  for (int n = 0; n < 50; ++n) {
    auto j = random_joint(rng);
    auto pmf = discretize(j, g);
    double total = 0.0;
    for (double v : pmf.p) total += v;
    CHECK(std::fabs(total - 1.0) < 1e-12);
    auto [as, ef] = marginals(pmf);
    double sd1 = std::sqrt(j.sigma.a11), sd2 = std::sqrt(j.sigma.a22);
    for (int i = 0; i < 3; ++i) {
      double lo = i == 0 ? -kInf : g.as_edges[i];
      double hi = i == 2 ? kInf : g.as_edges[i + 1];
      CHECK(std::fabs(as[i] - num::normal_interval_prob(lo, hi, j.mu.x, sd1)) < 1e-6);
    }
    for (int jx = 0; jx < 3; ++jx) {
      double lo = jx == 0 ? -kInf : g.ef_edges[jx];
      double hi = jx == 2 ? kInf : g.ef_edges[jx + 1];
      CHECK(std::fabs(ef[jx] - num::normal_interval_prob(lo, hi, j.mu.y, sd2)) < 1e-6);
    }
  }
}

TEST_CASE("renormalization residual is tiny for bounded sigma") {
  Rng rng(78, "prob-resid");
  auto g = CategoryGrid::defaults();
  for (int n = 0; n < 200; ++n) {
    auto j = random_joint(rng);
    double total = 0.0;
    for (int i = 0; i < 3; ++i) {
      double alo = i == 0 ? -kInf : g.as_edges[i];
      double ahi = i == 2 ? kInf : g.as_edges[i + 1];
      for (int jx = 0; jx < 3; ++jx) {
        double elo = jx == 0 ? -kInf : g.ef_edges[jx];
        double ehi = jx == 2 ? kInf : g.ef_edges[jx + 1];
        total += num::bvn_rect_prob({alo, elo}, {ahi, ehi}, j.mu, j.sigma);
      }
    }
    CHECK(std::fabs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("js divergence examples") {
  auto p = pmf_from({1, 0, 0, 0, 0, 0}, 2, 3);
  auto q = pmf_from({0, 1, 0, 0, 0, 0}, 2, 3);
  CHECK(js_divergence(p, p) == 0.0);
  CHECK(js_divergence(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  auto r = pmf_from({0.2, 0.3, 0.1, 0.1, 0.2, 0.1}, 2, 3);
  CHECK(js_divergence(p, r) == js_divergence(r, p));
  CHECK_THROWS_AS(js_divergence(p, pmf_from({1, 0, 0, 0, 0, 0}, 3, 2)), ShapeError);
}

TEST_CASE("js bounds over random PMF pairs") {
  Rng rng(79, "prob-js");
  double ln2 = std::log(2.0);
  for (int n = 0; n < 20000; ++n) {
    std::vector<double> a(9), b(9);
    double sa = 0, sb = 0;
    for (int i = 0; i < 9; ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform();
      if (n % 7 == 0 && i % 3 == 0) a[i] = 0.0;
      if (n % 11 == 0 && i % 2 == 0) b[i] = 0.0;
      sa += a[i];
      sb += b[i];
    }
    for (int i = 0; i < 9; ++i) {
      a[i] /= sa;
      b[i] /= sb;
    }
    double js = js_divergence(pmf_from(a, 3, 3), pmf_from(b, 3, 3));
    CHECK(js >= 0.0);
    CHECK(js <= ln2 + 1e-12);
  }
}

TEST_CASE("marginals arithmetic") {
  auto p = pmf_from({0.2, 0.1, 0.3, 0.4}, 2, 2);
  auto [as, ef] = marginals(p);
  CHECK(as[0] == doctest::Approx(0.3));
  CHECK(as[1] == doctest::Approx(0.7));
  CHECK(ef[0] == doctest::Approx(0.5));
  CHECK(ef[1] == doctest::Approx(0.5));
}

TEST_CASE("predicted classes tie-break toward lower index") {
  auto p = pmf_from({0.4, 0, 0, 0.4, 0, 0, 0.2, 0, 0}, 3, 3);
  auto [as_c, ef_c] = predicted_classes(p);
  CHECK(as_c == 0);
  CHECK(ef_c == 0);
  auto one_hot = pmf_from({0, 0, 0, 0, 0, 0, 1, 0, 0}, 3, 3);
  auto c2 = predicted_classes(one_hot);
  CHECK(c2.first == 2);
  CHECK(c2.second == 0);
}
