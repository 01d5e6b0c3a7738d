#pragma once

#include "pacq/common/errors.hpp"

namespace pacq::num {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Row-major 2x2 matrix.
struct Mat2 {
  double a11 = 0.0, a12 = 0.0;
  double a21 = 0.0, a22 = 0.0;
};

double std_normal_pdf(double x);

// Phi(x), absolute error well under 1e-10 (erfc based).
double std_normal_cdf(double x);

// P(lo < Z <= hi) for Z ~ N(mu, sigma^2); +-inf bounds allowed.
double normal_interval_prob(double lo, double hi, double mu, double sigma);

// CDF of the standard bivariate normal with correlation rho:
// P(X <= h, Y <= k). Absolute error below 5e-9 over rho in (-1, 1).
double bvn_cdf_standard(double h, double k, double rho);

// Mass of N(mu, sigma) on the rectangle (lo.x, hi.x] x (lo.y, hi.y];
// +-inf bounds allowed. sigma must be symmetric positive definite.
double bvn_rect_prob(Vec2 lo, Vec2 hi, Vec2 mu, const Mat2& sigma);

}  // namespace pacq::num
