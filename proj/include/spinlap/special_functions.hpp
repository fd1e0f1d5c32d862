// Special functions used across the library: Lanczos gamma, exponentially
// scaled modified Bessel I_nu, the exponential integral E1 and the parabolic
// cylinder function D_{-1/2}.
#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "spinlap/quadrature.hpp"

namespace spinlap {

using cplx = std::complex<double>;

namespace detail {
// Lanczos coefficients for g = 7, n = 9.
inline constexpr double kLanczosG = 7.0;
inline constexpr double kLanczosCoef[9] = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};
}  // namespace detail

// Gamma function by the Lanczos approximation (relative accuracy ~1e-15 on
// the positive axis), with reflection for x < 1/2.
inline double lanczos_gamma(double x) {
  using std::numbers::pi;
  if (x < 0.5) {
    double s = std::sin(pi * x);
    if (s == 0.0) throw std::domain_error("lanczos_gamma: pole");
    return pi / (s * lanczos_gamma(1.0 - x));
  }
  x -= 1.0;
  double a = detail::kLanczosCoef[0];
  double t = x + detail::kLanczosG + 0.5;
  for (int i = 1; i < 9; ++i) a += detail::kLanczosCoef[i] / (x + i);
  return std::sqrt(2.0 * pi) * std::pow(t, x + 0.5) * std::exp(-t) * a;
}

inline double lanczos_log_gamma(double x) {
  using std::numbers::pi;
  if (x < 0.5) return std::log(pi / std::abs(std::sin(pi * x))) - lanczos_log_gamma(1.0 - x);
  x -= 1.0;
  double a = detail::kLanczosCoef[0];
  double t = x + detail::kLanczosG + 0.5;
  for (int i = 1; i < 9; ++i) a += detail::kLanczosCoef[i] / (x + i);
  return 0.5 * std::log(2.0 * pi) + (x + 0.5) * std::log(t) - t + std::log(a);
}

inline double gamma_3_4() {
  static const double v = lanczos_gamma(0.75);
  return v;
}
inline double gamma_1_4() {
  static const double v = lanczos_gamma(0.25);
  return v;
}

// e^{-x} I_nu(x) for nu >= 0, x >= 0. The power series has positive terms, so
// it is summed outward from its largest term with ratio recurrences; for very
// large x the Hankel expansion is used.
inline double scaled_bessel_i(double nu, double x) {
  if (nu < 0) throw std::domain_error("scaled_bessel_i: nu < 0");
  if (x < 0) throw std::domain_error("scaled_bessel_i: x < 0");
  if (x == 0.0) return nu == 0.0 ? 1.0 : 0.0;
  if (x > 1.0e5 && x > 50.0 * nu * nu) {
    using std::numbers::pi;
    double mu = 4.0 * nu * nu, term = 1.0, sum = 1.0;
    for (int k = 1; k < 60; ++k) {
      double next = -term * (mu - (2.0 * k - 1) * (2.0 * k - 1)) / (k * 8.0 * x);
      if (std::abs(next) > std::abs(term)) break;
      term = next;
      sum += term;
      if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum / std::sqrt(2.0 * pi * x);
  }
  const double half = 0.5 * x, q = half * half;
  double kstar = 0.5 * (-(nu + 2.0) + std::sqrt(nu * nu + x * x));
  long k0 = kstar > 0 ? static_cast<long>(std::floor(kstar)) : 0;
  double log_t0 = (2.0 * k0 + nu) * std::log(half) - std::lgamma(k0 + 1.0) -
                  std::lgamma(k0 + nu + 1.0) - x;
  double t0 = std::exp(log_t0);
  if (t0 == 0.0) return 0.0;
  double sum = t0;
  double t = t0;
  for (long k = k0; ; ++k) {
    t *= q / ((k + 1.0) * (k + 1.0 + nu));
    sum += t;
    if (t < 1e-18 * sum) break;
  }
  t = t0;
  for (long k = k0; k > 0; --k) {
    t *= k * (k + nu) / q;
    sum += t;
    if (t < 1e-18 * sum) break;
  }
  return sum;
}

// Exponential integral E1(x) for x > 0.
inline double expint_e1(double x) {
  if (x <= 0) throw std::domain_error("expint_e1: x <= 0");
  if (x > 700.0) return 0.0;
  return -std::expint(-x);
}

// Parabolic cylinder function D_{-1/2}(z) in the standard (Whittaker)
// normalization, for |arg z| < pi/4 (the decaying sector used here) and any
// small |z|. Series near the origin, a Laplace-type integral at moderate |z|,
// and the asymptotic expansion for large |z|.
inline cplx parabolic_cylinder_dmhalf(cplx z) {
  using std::numbers::pi;
  const double az = std::abs(z);
  const double nu = -0.5;
  if (az <= 3.0) {
    // D_nu(z) = 2^{nu/2} e^{-z^2/4} [ sqrt(pi)/Gamma((1-nu)/2) M(-nu/2,1/2,z^2/2)
    //                                 - sqrt(2 pi) z / Gamma(-nu/2) M((1-nu)/2,3/2,z^2/2) ]
    cplx w = 0.5 * z * z;
    auto kummer = [&](double a, double b) {
      cplx term = 1.0, sum = 1.0;
      for (int n = 0; n < 400; ++n) {
        term *= (a + n) / ((b + n) * (n + 1.0)) * w;
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
      }
      return sum;
    };
    cplx m1 = kummer(-nu / 2.0, 0.5), m2 = kummer((1.0 - nu) / 2.0, 1.5);
    cplx pre = std::pow(2.0, nu / 2.0) * std::exp(-0.25 * z * z);
    return pre * (std::sqrt(pi) / gamma_3_4() * m1 - std::sqrt(2.0 * pi) * z / gamma_1_4() * m2);
  }
  if (az <= 10.0) {
    // D_{-1/2}(z) = 2 e^{-z^2/4} / sqrt(pi) * int_0^inf exp(-z s^2 - s^4/2) ds
    static const GaussLegendre gl(20);
    cplx acc = 0.0;
    const int panels = 80;
    const double smax = 5.0;
    for (int p = 0; p < panels; ++p) {
      double a = smax * p / panels, b = smax * (p + 1) / panels;
      for (int i = 0; i < gl.size(); ++i) {
        double s = 0.5 * (a + b) + 0.5 * (b - a) * gl.node(i);
        acc += 0.5 * (b - a) * gl.weight(i) * std::exp(-z * s * s - 0.5 * s * s * s * s);
      }
    }
    return 2.0 * std::exp(-0.25 * z * z) / std::sqrt(pi) * acc;
  }
  // D_nu(z) ~ z^nu e^{-z^2/4} sum_n (-1)^n nu(nu-1)...(nu-2n+1) / (n! (2 z^2)^n)
  cplx inv = 1.0 / (2.0 * z * z);
  cplx term = 1.0, sum = 1.0;
  for (int n = 1; n < 200; ++n) {
    cplx next = -term * (nu - 2.0 * n + 2.0) * (nu - 2.0 * n + 1.0) / double(n) * inv;
    if (std::abs(next) > std::abs(term)) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return std::pow(z, nu) * std::exp(-0.25 * z * z) * sum;
}

}  // namespace spinlap
