#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spinlap/cone_analysis.hpp"

using namespace spinlap;
using std::numbers::pi;

TEST(Pencil, RecurrenceValues) {
  EXPECT_EQ(pencil_coefficient(0, cplx(3.7, -1)), cplx(1.0));
  EXPECT_NEAR(std::abs(pencil_coefficient(1, 0.25) - (-4.0 / 5.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(pencil_coefficient(2, 0.25) - 8.0 / 45.0), 0.0, 1e-15);
  for (int n = 1; n < 8; ++n) {
    cplx q(0.3, 0.7);
    EXPECT_LT(std::abs(-double(n) * (q + double(n)) * pencil_coefficient(n, q) - pencil_coefficient(n - 1, q)), 1e-15);
  }
  EXPECT_THROW(pencil_coefficient(3, -2.0), ResonanceError);
}

TEST(Pencil, GeneralCoefficients) {
  EXPECT_EQ(general_cone_coefficient(0.3, 0.2, 0, 1.0).value, 1.0);
  EXPECT_NEAR(general_cone_coefficient(0, 0, 1, 1.0).value, -1.0 / 3.0, 1e-15);
  for (int j = 1; j < 6; ++j) {
    double p = 0.25, q = -0.1, b = 1.0;
    double f = -(q + j * (b + 1)) * (p + j * (b + 1) - b / 2);
    EXPECT_NEAR(f * general_cone_coefficient(p, q, j, b).value, general_cone_coefficient(p, q, j - 1, b).value, 1e-15);
  }
  EXPECT_TRUE(general_cone_coefficient(0, 0, 2, -0.5).resonance_risk);
  EXPECT_FALSE(general_cone_coefficient(0, 0, 2, 1.0).resonance_risk);
  EXPECT_THROW(general_cone_coefficient(0, -2.0, 1, 1.0), ResonanceError);
}

TEST(Pencil, ResolventPolesAndSymmetry) {
  const double alpha = 4 * pi;
  auto poles = pencil_poles(alpha, -2, 3);
  for (size_t m = 0; m < poles.size(); ++m) {
    int mm = -2 + static_cast<int>(m);
    EXPECT_NEAR(std::abs(poles[m] - cplx(0, (1.0 - 2 * mm) / 4.0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(std::cosh(0.5 * alpha * poles[m])), 0.0, 1e-14);
    EXPECT_THROW(pencil_resolvent(0.3, 1.1, poles[m] * poles[m], alpha), PoleError);
  }
  for (cplx mu2 : {cplx(0.3, 0.1), cplx(-2.0, 0.5), cplx(9.0, 0.0), cplx(1e-10, 0)})
    EXPECT_LT(std::abs(pencil_resolvent(0.4, 3.0, mu2, alpha) - pencil_resolvent(3.0, 0.4, mu2, alpha)), 1e-15);
  // mu -> 0: (|phi-phi'| - alpha/2)/2
  EXPECT_NEAR(pencil_resolvent(0.4, 3.0, 0.0, alpha).real(), 0.5 * (2.6 - 2 * pi), 1e-14);
}

TEST(Pencil, ResolventDecaysLikeInverseMuSquared) {
  const double alpha = 4 * pi;
  double prev = 0;
  for (double mu : {5.0, 10.0, 20.0, 40.0}) {
    double n = pencil_resolvent_schur_norm(mu * mu, alpha);
    double s = mu * mu * n;
    EXPECT_NEAR(s, 1.0, 2.0 / (alpha * mu) + 1e-3) << mu;
    if (prev > 0) {
      EXPECT_LT(n, prev);
    }
    prev = n;
  }
}

TEST(Carslaw, PlaneDegeneration) {
  for (double t : {0.05, 0.3, 1.0})
    for (double r : {0.0, 0.2, 0.9})
      for (double phi : {-2.9, -0.5, 0.0, 1.3, 3.0}) {
        double a = carslaw_kernel(r, phi, 0.5, 0.2, t, 2 * pi);
        double b = plane_heat_kernel(r, phi, 0.5, 0.2, t);
        EXPECT_LT(std::abs(a - b), 1e-10);
      }
  EXPECT_NEAR(carslaw_kernel(0.4, 0.7, 0.4, 0.7, 0.2, 2 * pi), 1.0 / (pi * 0.2), 1e-10);
}

TEST(Carslaw, ImageSumForIntegerCovers) {
  // alpha = 2 pi / N: sum of N rotated plane kernels
  for (int N : {2, 3}) {
    double alpha = 2 * pi / N;
    for (double phi : {0.1, 0.7}) {
      double ref = 0;
      for (int k = 0; k < N; ++k) ref += plane_heat_kernel(0.6, phi + k * alpha, 0.45, 0.3, 0.15);
      EXPECT_LT(std::abs(carslaw_kernel(0.6, phi, 0.45, 0.3, 0.15, alpha) - ref), 1e-10);
    }
  }
}

TEST(Carslaw, PositiveAndDecaying) {
  const double alpha = 4 * pi;
  double prev = 1e300;
  for (double d = 0.0; d < 2.0; d += 0.1) {
    double k = carslaw_kernel(1.0 + d, 0.3 + d, 1.0, 0.3, 0.05, alpha);
    EXPECT_GT(k, 0.0);
    EXPECT_LT(k, prev);
    prev = k;
  }
  EXPECT_LT(prev, 1e-30);
  for (double phi = 0.0; phi < alpha; phi += 0.5)
    EXPECT_GT(carslaw_kernel(0.3, phi, 0.5, 0.0, 0.2, alpha), 0.0);
}

TEST(Antiperiodic, RoutesAgreeOnGrid) {
  for (const auto& row : cone_selftest()) {
    if (row.test == "antiperiodic_contour_vs_bessel") {
      EXPECT_LT(row.abs_diff, 1e-8) << row.t;
    }
  }
}

TEST(Antiperiodic, SignReversalAfterFullTurn) {
  const double alpha = 4 * pi;
  for (double phi : {0.2, 2.0, 5.0}) {
    double a = antiperiodic_kernel_contour(0.5, phi, 0.7, 0.1, 0.3, alpha);
    double b = antiperiodic_kernel_contour(0.5, phi + alpha, 0.7, 0.1, 0.3, alpha);
    EXPECT_NEAR(a, -b, 1e-12);
    EXPECT_NEAR(antiperiodic_kernel_bessel(0.5, phi + alpha, 0.7, 0.1, 0.3, alpha),
                -antiperiodic_kernel_bessel(0.5, phi, 0.7, 0.1, 0.3, alpha), 1e-12);
  }
}

TEST(Antiperiodic, VertexScaling) {
  const double alpha = 4 * pi;
  double r1 = 1e-8, r2 = 1e-10;
  double k1 = antiperiodic_kernel_bessel(r1, 0.0, 0.5, 0.0, 0.2, alpha);
  double k2 = antiperiodic_kernel_bessel(r2, 0.0, 0.5, 0.0, 0.2, alpha);
  double slope = std::log(k1 / k2) / std::log(r1 / r2);
  EXPECT_NEAR(slope, pi / alpha, 1e-3);
  double c1 = antiperiodic_kernel_contour(r1, 0.0, 0.5, 0.0, 0.2, alpha);
  EXPECT_NEAR(c1 / k1, 1.0, 1e-6);
}

TEST(TraceConstant, ClosedForm) {
  EXPECT_NEAR(cone_trace_constant_closed(4 * pi), -3.0 / 16.0, 1e-15);
  EXPECT_NEAR(cone_trace_constant_closed(2 * pi), -1.0 / 8.0, 1e-15);
  for (int g = 2; g <= 5; ++g) EXPECT_NEAR((2 * g - 2) * cone_trace_constant_closed(4 * pi), -3.0 * (g - 1) / 8.0, 1e-15);
}

TEST(TraceConstant, NumericRoutes) {
  for (double a : {2 * pi, 3 * pi, 4 * pi}) {
    EXPECT_NEAR(cone_trace_constant_contour(a), cone_trace_constant_closed(a), 1e-6) << a;
    EXPECT_NEAR(cone_trace_constant_bessel(a), cone_trace_constant_closed(a), 1e-6) << a;
  }
  // t-independence of the contour route
  EXPECT_NEAR(cone_trace_constant_contour(4 * pi, 0.001), cone_trace_constant_contour(4 * pi, 0.1), 1e-9);
}

TEST(Scattering, ModelAsymptotes) {
  const double G = gamma_3_4();
  auto s = model_scattering_asymptote(cplx(-1e4, 0), 2);
  EXPECT_DOUBLE_EQ(s.p_inf, -0.5);
  EXPECT_NEAR(s.t_inf, std::pow(G, -4.0), 1e-15);
  for (int g = 2; g <= 4; ++g) {
    cplx lam(-2e3, 300);
    auto a = model_scattering_asymptote(lam, g);
    cplx det = std::pow(a.T_diag, 2.0 * g - 2.0);
    EXPECT_LT(std::abs(det / a.det_T - 1.0), 1e-13);
  }
}

TEST(Scattering, RebuiltFromParabolicCylinder) {
  const double G = gamma_3_4();
  for (cplx lam : {cplx(-1e3, 0), cplx(-5e3, 2e3), cplx(-1e5, -4e4), cplx(-1e7, 0)}) {
    cplx T = model_scattering_diag(lam);
    EXPECT_LT(std::abs(T * G * G * std::pow(-lam, 0.25) - 1.0), 1e-6) << lam;
  }
  // F solves F'' + 4 lambda rho^2 F = 0
  cplx lam(-2e3, 5e2);
  double rho = 0.05, h = 1e-4;
  cplx f0 = model_decaying_solution(lam, rho);
  cplx fpp = (model_decaying_solution(lam, rho + h) - 2.0 * f0 + model_decaying_solution(lam, rho - h)) / (h * h);
  EXPECT_LT(std::abs(fpp + 4.0 * lam * rho * rho * f0), 1e-4 * std::abs(fpp));
}
