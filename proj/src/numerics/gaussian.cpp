#include "pacq/numerics/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pacq::num {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 6.283185307179586476925;

// Gauss-Legendre half-rules used by the Drezner-Wesolowsky integration,
// selected by |rho| (Genz's arrangement: 6, 12 and 20 point rules).
constexpr double kW6[3] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
constexpr double kX6[3] = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};

constexpr double kW12[6] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                            0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
constexpr double kX12[6] = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                            0.5873179542866171, 0.3678314989981802, 0.1252334085114692};

constexpr double kW20[10] = {0.01761400713915212, 0.04060142980038694,
                             0.06267204833410906, 0.08327674157670475,
                             0.1019301198172404,  0.1181945319615184,
                             0.1316886384491766,  0.1420961093183821,
                             0.1491729864726037,  0.1527533871307259};
constexpr double kX20[10] = {0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                             0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                             0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                             0.07652652113349733};

// P(X > dh, Y > dk) for the standard bivariate normal with correlation r.
double bvn_upper(double dh, double dk, double r) {
  if (dh == kInf || dk == kInf) return 0.0;
  if (dh == -kInf) return dk == -kInf ? 1.0 : std_normal_cdf(-dk);
  if (dk == -kInf) return std_normal_cdf(-dh);
  if (r == 0.0) return std_normal_cdf(-dh) * std_normal_cdf(-dk);

  const double* w;
  const double* x;
  int lg;
  double ar = std::fabs(r);
  if (ar < 0.3) {
    w = kW6; x = kX6; lg = 3;
  } else if (ar < 0.75) {
    w = kW12; x = kX12; lg = 6;
  } else {
    w = kW20; x = kX20; lg = 10;
  }

  double h = dh, k = dk;
  double hk = h * k;
  double bvn = 0.0;

  if (ar < 0.925) {
    double hs = (h * h + k * k) / 2.0;
    double asr = std::asin(r);
    for (int i = 0; i < lg; ++i) {
      for (int is = -1; is <= 1; is += 2) {
        double sn = std::sin(asr * (is * x[i] + 1.0) / 2.0);
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / (2.0 * kTwoPi) + std_normal_cdf(-h) * std_normal_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (ar < 1.0) {
      double as = (1.0 - r) * (1.0 + r);
      double a = std::sqrt(as);
      double bs = (h - k) * (h - k);
      double c = (4.0 - hk) / 8.0;
      double d = (12.0 - hk) / 16.0;
      double asr = -(bs / as + hk) / 2.0;
      if (asr > -100.0)
        bvn = a * std::exp(asr) *
              (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
      if (-hk < 100.0) {
        double b = std::sqrt(bs);
        bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * std_normal_cdf(-b / a) * b *
               (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
      }
      a /= 2.0;
      for (int i = 0; i < lg; ++i) {
        for (int is = -1; is <= 1; is += 2) {
          double xs = a * (is * x[i] + 1.0);
          xs *= xs;
          double rs = std::sqrt(1.0 - xs);
          double asr2 = -(bs / xs + hk) / 2.0;
          if (asr2 > -100.0) {
            bvn += a * w[i] * std::exp(asr2) *
                   (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                    (1.0 + c * xs * (1.0 + d * xs)));
          }
        }
      }
      bvn = -bvn / kTwoPi;
    }
    if (r > 0.0) {
      bvn += std_normal_cdf(-std::max(h, k));
    } else {
      bvn = -bvn;
      if (k > h) {
        if (h < 0.0)
          bvn += std_normal_cdf(k) - std_normal_cdf(h);
        else
          bvn += std_normal_cdf(-h) - std_normal_cdf(-k);
      }
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

}  // namespace

double std_normal_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

double normal_interval_prob(double lo, double hi, double mu, double sigma) {
  if (sigma <= 0.0) throw CovarianceError("normal_interval_prob: sigma must be positive");
  if (!(lo < hi)) return 0.0;
  double zl = lo == -kInf ? -kInf : (lo - mu) / sigma;
  double zh = hi == kInf ? kInf : (hi - mu) / sigma;
  double pl = zl == -kInf ? 0.0 : std_normal_cdf(zl);
  double ph = zh == kInf ? 1.0 : std_normal_cdf(zh);
  return std::clamp(ph - pl, 0.0, 1.0);
}

double bvn_cdf_standard(double h, double k, double rho) {
  return bvn_upper(-h, -k, rho);
}

double bvn_rect_prob(Vec2 lo, Vec2 hi, Vec2 mu, const Mat2& sigma) {
  if (std::fabs(sigma.a12 - sigma.a21) > 1e-12 * (1.0 + std::fabs(sigma.a12)))
    throw CovarianceError("bvn_rect_prob: sigma must be symmetric");
  double s11 = sigma.a11, s22 = sigma.a22, s12 = sigma.a12;
  double det = s11 * s22 - s12 * s12;
  if (!(s11 > 0.0) || !(s22 > 0.0) || !(det > 0.0))
    throw CovarianceError("bvn_rect_prob: sigma must be positive definite");
  if (!(lo.x < hi.x) || !(lo.y < hi.y)) return 0.0;

  double sd1 = std::sqrt(s11), sd2 = std::sqrt(s22);
  double rho = s12 / (sd1 * sd2);
  rho = std::clamp(rho, -1.0 + 1e-15, 1.0 - 1e-15);

  auto z1 = [&](double v) { return std::isinf(v) ? v : (v - mu.x) / sd1; };
  auto z2 = [&](double v) { return std::isinf(v) ? v : (v - mu.y) / sd2; };
  double a1 = z1(lo.x), b1 = z1(hi.x);
  double a2 = z2(lo.y), b2 = z2(hi.y);

  double p = bvn_cdf_standard(b1, b2, rho) - bvn_cdf_standard(a1, b2, rho) -
             bvn_cdf_standard(b1, a2, rho) + bvn_cdf_standard(a1, a2, rho);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace pacq::num
