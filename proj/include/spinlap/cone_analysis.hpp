// Model objects on an infinite flat cone of angle alpha: pencil coefficients,
// the angular resolvent, heat kernels (contour and Bessel forms), the
// per-vertex heat-trace constant and the model scattering coefficient built
// from D_{-1/2}.
//
// Heat kernels use the normalization of exp(t Delta/4): on the plane the
// kernel is exp(-|z-z'|^2/t)/(pi t).
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinlap/quadrature.hpp"
#include "spinlap/special_functions.hpp"

namespace spinlap {

struct ResonanceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PoleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// d(0,q) = 1, -n (q+n) d(n,q) = d(n-1,q).
inline cplx pencil_coefficient(int n, cplx q) {
  if (n < 0) throw std::invalid_argument("pencil_coefficient: n < 0");
  cplx d = 1.0;
  for (int k = 1; k <= n; ++k) {
    cplx f = q + double(k);
    if (std::abs(f) < 1e-14) throw ResonanceError("pencil_coefficient: q + k = 0 (k = " + std::to_string(k) + ")");
    d /= -double(k) * f;
  }
  return d;
}

// Pole list mu_m = i pi (1-2m)/alpha of the angular pencil, m in [m_lo, m_hi].
inline std::vector<cplx> pencil_poles(double alpha, int m_lo, int m_hi) {
  std::vector<cplx> out;
  for (int m = m_lo; m <= m_hi; ++m) out.emplace_back(0.0, std::numbers::pi * (1.0 - 2.0 * m) / alpha);
  return out;
}

struct GeneralCoefficient {
  double value;
  bool resonance_risk;  // b < 0: rational values may produce log terms
};

// d(p,q,0,b) = 1, -(q + j(b+1)) (p + j(b+1) - b/2) d(p,q,j,b) = d(p,q,j-1,b).
inline GeneralCoefficient general_cone_coefficient(double p, double q, int j, double b) {
  if (j < 0) throw std::invalid_argument("general_cone_coefficient: j < 0");
  double d = 1.0;
  for (int n = 1; n <= j; ++n) {
    double f = (q + n * (b + 1.0)) * (p + n * (b + 1.0) - 0.5 * b);
    if (std::abs(f) < 1e-14) throw ResonanceError("general_cone_coefficient: vanishing factor at n = " + std::to_string(n));
    d /= -f;
  }
  return {d, b < 0.0};
}

// sh(mu(|phi-phi'| - alpha/2)) / (2 mu ch(alpha mu / 2)); even in mu, so any
// square root of mu2 will do.
inline cplx pencil_resolvent(double phi, double phip, cplx mu2, double alpha) {
  const cplx mu = std::sqrt(mu2);
  const double a = std::abs(phi - phip) - 0.5 * alpha;
  const cplx den = std::cosh(0.5 * alpha * mu);
  if (std::abs(den) < 1e-13 * std::max(1.0, std::abs(std::sinh(0.5 * alpha * mu))))
    throw PoleError("pencil_resolvent: mu at a pole");
  cplx shq;  // sh(mu a)/mu
  if (std::abs(mu * a) < 1e-3) {
    cplx w = mu2 * a * a;
    shq = a * (1.0 + w / 6.0 + w * w / 120.0 + w * w * w / 5040.0);
  } else {
    shq = std::sinh(mu * a) / mu;
  }
  return shq / (2.0 * den);
}

// Schur-test bound max_phi int_0^alpha |N(phi,phi',mu^2)| dphi' on an n-panel
// Gauss-Legendre grid.
inline double pencil_resolvent_schur_norm(cplx mu2, double alpha, int rows = 33, int panels = 64) {
  static const GaussLegendre gl(8);
  double best = 0.0;
  for (int i = 0; i < rows; ++i) {
    double phi = alpha * i / (rows - 1.0) * (1.0 - 1e-12);
    double acc = 0.0;
    // panel breaks placed at phi keep the kink of |phi-phi'| on a node boundary
    std::vector<double> br;
    for (int p = 0; p <= panels; ++p) br.push_back(alpha * p / panels);
    br.push_back(phi);
    std::sort(br.begin(), br.end());
    for (size_t p = 0; p + 1 < br.size(); ++p) {
      double a = br[p], b = br[p + 1];
      if (b - a <= 0) continue;
      acc += gl.integrate([&](double s) { return std::abs(pencil_resolvent(phi, s, mu2, alpha)); }, a, b);
    }
    best = std::max(best, acc);
  }
  return best;
}

namespace detail {

// E(theta) = exp(-(r^2 + r'^2 - 2 r r' cos theta)/t)
inline cplx cone_gauss(double r, double rp, double t, cplx th) {
  return std::exp(-(r * r + rp * rp - 2.0 * r * rp * std::cos(th)) / t);
}

inline double pole_distance(double c, double dphi, double alpha) {
  double d = 1e300;
  for (double sgn : {-1.0, 1.0}) {
    double x = sgn * c - dphi;
    double k = std::round(x / alpha);
    d = std::min(d, std::abs(x - k * alpha));
  }
  return d;
}

// Line abscissa c: pi unless a pole theta = dphi + n alpha sits close to +-pi,
// otherwise the point of [3pi/4, pi] farthest from the poles.
inline double contour_abscissa(double dphi, double alpha, double& dist) {
  using std::numbers::pi;
  dist = pole_distance(pi, dphi, alpha);
  if (dist >= 0.25) return pi;
  double best_c = pi, best_d = dist;
  for (int s = 0; s < 64; ++s) {
    double c = 0.75 * pi + 0.25 * pi * s / 64.0;
    double d = pole_distance(c, dphi, alpha);
    if (d > best_d + 1e-12) {
      best_d = d;
      best_c = c;
    }
  }
  dist = best_d;
  return best_c;
}

// Line contribution (without the 1/(pi t) factor):
// (1/(2 alpha)) int_R [ G(-c+iy) - G(c+iy) ] dy,  G = Ehat cot(pi (theta - dphi)/alpha),
// with Ehat supplied by the caller (so the same routine serves the r-integrated
// trace constant).
template <class EFun>
double contour_line_term(double dphi, double alpha, EFun&& ehat) {
  double dist = 0.0;
  const double c = contour_abscissa(dphi, alpha, dist);
  if (dist < 1e-6) throw QuadratureError("carslaw: contour too close to a pole");
  const double pi = std::numbers::pi;
  const double h = 0.18 * std::min(dist, 1.0);
  auto F = [&](double y) {
    cplx tm(-c, y), tp(c, y);
    cplx gm = ehat(tm) / std::tan(pi * (tm - dphi) / alpha);
    cplx gp = ehat(tp) / std::tan(pi * (tp - dphi) / alpha);
    return (gm - gp).real();
  };
  double acc = F(0.0);
  double scale = std::abs(acc);
  int small = 0;
  for (int k = 1; k < 200000; ++k) {
    double v = F(k * h);
    acc += 2.0 * v;
    scale = std::max(scale, std::abs(v));
    if (std::abs(v) < 1e-19 + 1e-18 * scale) {
      if (++small >= 4) return h * acc / (2.0 * alpha);
    } else {
      small = 0;
    }
  }
  throw QuadratureError("carslaw: line integral did not converge");
}

}  // namespace detail

// Heat kernel on the cone of angle alpha, periodic in the angle, by the
// Sommerfeld-Carslaw contour moved onto the lines Re theta = +-c with the
// residues inside picked up explicitly.
inline double carslaw_kernel(double r, double phi, double rp, double phip, double t, double alpha) {
  if (!(t > 0.0)) throw std::domain_error("carslaw_kernel: t <= 0");
  if (r < 0 || rp < 0) throw std::domain_error("carslaw_kernel: negative radius");
  const double pi = std::numbers::pi;
  // On the axis only the rotation-invariant mode survives, and a line at
  // c != pi would miss the non-decaying edge contributions.
  if (r * rp == 0.0) return 2.0 / (alpha * t) * std::exp(-(r * r + rp * rp) / t);
  double dphi = std::remainder(phi - phip, alpha);
  double dist = 0.0;
  const double c = detail::contour_abscissa(dphi, alpha, dist);
  double res = 0.0;
  int nmax = static_cast<int>(std::ceil((c + std::abs(dphi)) / alpha)) + 1;
  for (int n = -nmax; n <= nmax; ++n) {
    double th = dphi + n * alpha;
    if (std::abs(th) < c) res += std::exp(-(r * r + rp * rp - 2.0 * r * rp * std::cos(th)) / t);
  }
  double line = detail::contour_line_term(dphi, alpha, [&](cplx th) { return detail::cone_gauss(r, rp, t, th); });
  return (res + line) / (pi * t);
}

inline double plane_heat_kernel(double r, double phi, double rp, double phip, double t) {
  double d2 = r * r + rp * rp - 2.0 * r * rp * std::cos(phi - phip);
  return std::exp(-d2 / t) / (std::numbers::pi * t);
}

// alpha-anti-periodic kernel as the odd part of the 2 alpha-periodic one.
inline double antiperiodic_kernel_contour(double r, double phi, double rp, double phip, double t, double alpha) {
  return carslaw_kernel(r, phi, rp, phip, t, 2.0 * alpha) - carslaw_kernel(r, phi + alpha, rp, phip, t, 2.0 * alpha);
}

// Same kernel from its angular Fourier expansion:
// (4/(alpha t)) e^{-(r^2+r'^2)/t} sum_{k>=0} cos(nu_k (phi-phi')) I_{nu_k}(2 r r'/t),
// nu_k = pi (2k+1)/alpha, with exponentially scaled Bessel functions.
inline double antiperiodic_kernel_bessel(double r, double phi, double rp, double phip, double t, double alpha) {
  if (!(t > 0.0)) throw std::domain_error("antiperiodic_kernel_bessel: t <= 0");
  const double pi = std::numbers::pi;
  const double x = 2.0 * r * rp / t;
  const double pref = 4.0 / (alpha * t) * std::exp(-(r - rp) * (r - rp) / t);
  double sum = 0.0;
  for (int k = 0; k < 100000; ++k) {
    double nu = pi * (2.0 * k + 1.0) / alpha;
    double b = scaled_bessel_i(nu, x);
    sum += std::cos(nu * (phi - phip)) * b;
    if (nu > x && b < 1e-18 * std::max(std::abs(sum), 1e-300)) break;
    if (b == 0.0 && nu > x) break;
  }
  return pref * sum;
}

// -(1/8)(alpha/(3 pi) + 2 pi/(3 alpha))
inline double cone_trace_constant_closed(double alpha) {
  const double pi = std::numbers::pi;
  return -0.125 * (alpha / (3.0 * pi) + 2.0 * pi / (3.0 * alpha));
}

// alpha * int_0^inf r dr [K_anti(r,phi,r,phi,t) - 1/(pi t)] with the kernel
// diagonal taken from the contour form and r integrated by Gauss-Legendre in
// r/sqrt(t). Requires alpha >= pi so that no image residue other than the
// identity survives; the result is independent of t.
inline double cone_trace_constant_contour(double alpha, double t = 0.01) {
  if (alpha < std::numbers::pi) throw std::domain_error("cone_trace_constant_contour: alpha < pi");
  const double pi = std::numbers::pi;
  static const GaussLegendre gl(24);
  const double st = std::sqrt(t);
  double acc = 0.0;
  const int panels = 12;
  const double smax = 6.0;
  for (int p = 0; p < panels; ++p) {
    double a = smax * p / panels, b = smax * (p + 1) / panels;
    acc += gl.integrate(
        [&](double s) {
          double r = s * st;
          double k = antiperiodic_kernel_contour(r, 0.0, r, 0.0, t, alpha);
          return r * (k - 1.0 / (pi * t));
        },
        a, b);
  }
  return alpha * acc * st;
}

// int_0^inf [ e^{-x} sum_k I_{nu_k}(x) - alpha/(4 pi) ] dx, the r-integrated
// Bessel form; x = u^{1/nu_0} removes the x^{nu_0} cusp at the origin.
inline double cone_trace_constant_bessel(double alpha) {
  const double pi = std::numbers::pi;
  const double nu0 = pi / alpha;
  const double m = 1.0 / nu0;
  const double xmax = 40.0;
  const double umax = std::pow(xmax, nu0);
  static const GaussLegendre gl(24);
  auto integrand = [&](double x) {
    double sum = 0.0;
    for (int k = 0; k < 100000; ++k) {
      double nu = pi * (2.0 * k + 1.0) / alpha;
      double b = scaled_bessel_i(nu, x);
      sum += b;
      if (nu > x && b < 1e-17 * sum) break;
    }
    return sum - alpha / (4.0 * pi);
  };
  double acc = 0.0;
  const int panels = 40;
  for (int p = 0; p < panels; ++p) {
    double a = umax * p / panels, b = umax * (p + 1) / panels;
    acc += gl.integrate(
        [&](double u) {
          if (u <= 0.0) return 0.0;
          double x = std::pow(u, m);
          return integrand(x) * m * std::pow(u, m - 1.0);
        },
        a, b);
  }
  return acc;
}

struct ScatteringAsymptote {
  cplx T_diag;
  cplx det_T;
  double t_inf;
  double p_inf;
};

// Large-|lambda| diagonal T(lambda) ~ Gamma(3/4)^{-2} (-lambda)^{-1/4} and its
// determinant over 2g-2 cone points.
inline ScatteringAsymptote model_scattering_asymptote(cplx lambda, int g) {
  if (!(lambda.real() < 0.0)) throw std::domain_error("model_scattering_asymptote: Re lambda >= 0");
  const double G = gamma_3_4();
  cplx ml = -lambda;
  ScatteringAsymptote s;
  s.T_diag = std::pow(ml, -0.25) / (G * G);
  s.t_inf = std::pow(G, 4.0 - 4.0 * g);
  s.p_inf = 0.5 * (1.0 - g);
  s.det_T = s.t_inf * std::pow(ml, s.p_inf);
  return s;
}

// The decaying radial solution F(rho) = c D_{-1/2}(2 (-lambda)^{1/4} rho) of
// F'' + 4 lambda rho^2 F = 0, normalized so that its |x|-linear part is the
// model singular mode -2|x|/pi. Returns F.
inline cplx model_decaying_solution(cplx lambda, double rho) {
  const double pi = std::numbers::pi;
  cplx q = std::pow(-lambda, 0.25);
  // D'_{-1/2}(0) = -2^{1/4} sqrt(pi) / Gamma(1/4)
  double dp0 = -std::pow(2.0, 0.25) * std::sqrt(pi) / gamma_1_4();
  cplx c = -1.0 / (pi * q * dp0);
  return c * parabolic_cylinder_dmhalf(2.0 * q * rho);
}

// T_kk(lambda) rebuilt numerically: constant term of F(rho) + 2 rho/pi as
// rho -> 0, extrapolated from two small radii (the remainder is O(rho^4)).
inline cplx model_scattering_diag(cplx lambda) {
  const double pi = std::numbers::pi;
  double scale = std::pow(std::abs(lambda), -0.25);
  double r1 = 2e-3 * scale, r2 = 1e-3 * scale;
  cplx v1 = model_decaying_solution(lambda, r1) + 2.0 * r1 / pi;
  cplx v2 = model_decaying_solution(lambda, r2) + 2.0 * r2 / pi;
  return (16.0 * v2 - v1) / 15.0;
}

struct ConeSelftestRow {
  std::string test;
  double alpha;
  double t;
  double value_route1;
  double value_route2;
  double abs_diff;
};

// Dual-route heat kernel grid (10 radii x 10 angles x 5 times at alpha = 4 pi),
// the alpha = 2 pi degeneration and the trace constants.
inline std::vector<ConeSelftestRow> cone_selftest() {
  std::vector<ConeSelftestRow> rows;
  const double pi = std::numbers::pi;
  const double alpha = 4.0 * pi;
  const double ts[5] = {0.05, 0.1, 0.2, 0.5, 1.0};
  for (double t : ts) {
    double worst = 0.0, v1w = 0.0, v2w = 0.0;
    for (int i = 0; i < 10; ++i) {
      double r = 0.05 + 0.15 * i;
      for (int j = 0; j < 10; ++j) {
        double phi = 0.1 + 0.4 * pi * j;
        double rp = 0.6, phip = 0.3;
        double a = antiperiodic_kernel_contour(r, phi, rp, phip, t, alpha);
        double b = antiperiodic_kernel_bessel(r, phi, rp, phip, t, alpha);
        if (std::abs(a - b) >= worst) {
          worst = std::abs(a - b);
          v1w = a;
          v2w = b;
        }
      }
    }
    rows.push_back({"antiperiodic_contour_vs_bessel", alpha, t, v1w, v2w, worst});
  }
  for (double t : ts) {
    double worst = 0.0, v1w = 0.0, v2w = 0.0;
    for (int i = 0; i < 10; ++i) {
      double r = 0.05 + 0.15 * i;
      for (int j = 0; j < 10; ++j) {
        double phi = -pi + 0.2 * pi * j + 0.05;
        double a = carslaw_kernel(r, phi, 0.6, 0.3, t, 2.0 * pi);
        double b = plane_heat_kernel(r, phi, 0.6, 0.3, t);
        if (std::abs(a - b) >= worst) {
          worst = std::abs(a - b);
          v1w = a;
          v2w = b;
        }
      }
    }
    rows.push_back({"plane_degeneration", 2.0 * pi, t, v1w, v2w, worst});
  }
  for (double a : {2.0 * pi, 3.0 * pi, 4.0 * pi}) {
    double closed = cone_trace_constant_closed(a);
    double c1 = cone_trace_constant_contour(a);
    double c2 = cone_trace_constant_bessel(a);
    rows.push_back({"trace_constant_contour", a, 0.01, c1, closed, std::abs(c1 - closed)});
    rows.push_back({"trace_constant_bessel", a, 0.0, c2, closed, std::abs(c2 - closed)});
  }
  return rows;
}

}  // namespace spinlap
