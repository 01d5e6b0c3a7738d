#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "pacq/numerics/gaussian.hpp"

using namespace pacq;
using namespace pacq::num;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double pdf(double x) { return 0.3989422804014326779 * std::exp(-0.5 * x * x); }

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  // n even
  double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                            double fa, double fm, double fb, double whole, double tol,
                            int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol) {
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48);
}

// Independent oracle for P(X <= h, Y <= k), standard bivariate normal.
double bvn_cdf_quadrature(double h, double k, double rho) {
  double s = std::sqrt(1.0 - rho * rho);
  auto f = [&](double x) {
    return pdf(x) * std_normal_cdf((k - rho * x) / s);
  };
  double lo = -8.5, hi = std::min(h, 8.5);
  if (hi <= lo) return 0.0;
  return adaptive_simpson(f, lo, hi, 1e-12);
}

}  // namespace

TEST_CASE("std_normal_cdf basics") {
  CHECK(std_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std_normal_cdf(8.0) > 1.0 - 1e-15);
  CHECK(std_normal_cdf(-8.0) < 1e-15);
  // quadrature oracle for Phi(1): 0.5 + integral of the density over [0, 1]
  double oracle = 0.5 + simpson(pdf, 0.0, 1.0, 2000);
  CHECK(std_normal_cdf(1.0) == doctest::Approx(oracle).epsilon(1e-10));
  CHECK(std_normal_cdf(1.0) == doctest::Approx(0.841344746).epsilon(1e-9));
}

TEST_CASE("bvn_rect_prob trivial cases") {
  Mat2 eye{1, 0, 0, 1};
  CHECK(bvn_rect_prob({-kInf, -kInf}, {kInf, kInf}, {0, 0}, eye) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bvn_rect_prob({-kInf, -kInf}, {0, 0}, {0, 0}, eye) ==
        doctest::Approx(0.25).epsilon(1e-10));
}

TEST_CASE("correlated quadrant matches the arcsine closed form and Monte Carlo") {
  Mat2 s{1, 0.5, 0.5, 1};
  double got = bvn_rect_prob({-kInf, -kInf}, {0, 0}, {0, 0}, s);
  // P(X<=0, Y<=0) = 1/4 + asin(rho) / (2 pi)
  double closed = 0.25 + std::asin(0.5) / (2.0 * M_PI);
  CHECK(got == doctest::Approx(closed).epsilon(1e-7));
  CHECK(got == doctest::Approx(1.0 / 3.0).epsilon(1e-5));

  std::mt19937_64 gen(987654321);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int n = 10'000'000;
  int hits = 0;
  double b = std::sqrt(1.0 - 0.25);
  for (int i = 0; i < n; ++i) {
    double z1 = nd(gen);
    double z2 = 0.5 * z1 + b * nd(gen);
    if (z1 <= 0.0 && z2 <= 0.0) ++hits;
  }
  double mc = static_cast<double>(hits) / n;
  double se = std::sqrt(mc * (1.0 - mc) / n);
  CHECK(std::fabs(got - mc) < 3.0 * se);
}

TEST_CASE("bvn cdf agrees with adaptive quadrature across correlations") {
  double hs[] = {-2.0, -0.5, 0.0, 0.7, 1.8};
  double ks[] = {-1.5, 0.0, 0.4, 2.2};
  double rhos[] = {-0.99, -0.95, -0.8, -0.5, -0.2, 0.0, 0.3, 0.6, 0.9, 0.97, 0.999};
  for (double r : rhos)
    for (double h : hs)
      for (double k : ks) {
        double got = bvn_cdf_standard(h, k, r);
        double want = bvn_cdf_quadrature(h, k, r);
        CHECK(std::fabs(got - want) < 1e-7);
      }
}

TEST_CASE("rectangle probabilities for a general gaussian") {
  Mat2 s{0.04, -0.012, -0.012, 0.09};
  Vec2 mu{0.4, 0.55};
  double got = bvn_rect_prob({0.3, 0.4}, {0.5, 0.7}, mu, s);
  // standardize and compare against the quadrature oracle combination
  double sd1 = 0.2, sd2 = 0.3, rho = -0.012 / (0.2 * 0.3);
  auto F = [&](double a, double b2) {
    return bvn_cdf_quadrature((a - mu.x) / sd1, (b2 - mu.y) / sd2, rho);
  };
  double want = F(0.5, 0.7) - F(0.3, 0.7) - F(0.5, 0.4) + F(0.3, 0.4);
  CHECK(got == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("monotone growth and additivity") {
  Mat2 s{1, 0.3, 0.3, 1};
  double p1 = bvn_rect_prob({-1, -1}, {0.5, 0.5}, {0, 0}, s);
  double p2 = bvn_rect_prob({-1, -1}, {0.8, 0.5}, {0, 0}, s);
  double p3 = bvn_rect_prob({-1.5, -1}, {0.8, 0.9}, {0, 0}, s);
  CHECK(p1 <= p2 + 1e-12);
  CHECK(p2 <= p3 + 1e-12);

  // split [−1,1]×[−1,1] into left and right halves
  double whole = bvn_rect_prob({-1, -1}, {1, 1}, {0, 0}, s);
  double left = bvn_rect_prob({-1, -1}, {0.2, 1}, {0, 0}, s);
  double right = bvn_rect_prob({0.2, -1}, {1, 1}, {0, 0}, s);
  CHECK(std::fabs(whole - (left + right)) < 1e-6);
}

TEST_CASE("diagonal covariance factorizes") {
  Mat2 s{0.25, 0, 0, 4.0};
  Vec2 mu{1.0, -2.0};
  double got = bvn_rect_prob({0.5, -3.0}, {1.5, 0.0}, mu, s);
  double p1 = normal_interval_prob(0.5, 1.5, 1.0, 0.5);
  double p2 = normal_interval_prob(-3.0, 0.0, -2.0, 2.0);
  CHECK(std::fabs(got - p1 * p2) < 1e-9);
}

TEST_CASE("invalid covariance is rejected") {
  CHECK_THROWS_AS(bvn_rect_prob({0, 0}, {1, 1}, {0, 0}, Mat2{1, 2, 2, 1}), CovarianceError);
  CHECK_THROWS_AS(bvn_rect_prob({0, 0}, {1, 1}, {0, 0}, Mat2{1, 0.5, 0.2, 1}),
                  CovarianceError);
  CHECK_THROWS_AS(bvn_rect_prob({0, 0}, {1, 1}, {0, 0}, Mat2{-1, 0, 0, 1}),
                  CovarianceError);
  CHECK_THROWS_AS(normal_interval_prob(0, 1, 0, 0), CovarianceError);
}

TEST_CASE("empty or inverted rectangles have zero mass") {
  Mat2 eye{1, 0, 0, 1};
  CHECK(bvn_rect_prob({0.5, 0.0}, {0.5, 1.0}, {0, 0}, eye) == 0.0);
  CHECK(bvn_rect_prob({1.0, 0.0}, {0.5, 1.0}, {0, 0}, eye) == 0.0);
}
