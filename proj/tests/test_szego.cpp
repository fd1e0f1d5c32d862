#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <set>

#include "spinlap/szego.hpp"

using namespace spinlap;
using std::numbers::pi;

namespace {

const cplx I(0, 1);

SpinMesh mesh(const ModuliPoint& m, double h) {
  MeshParams p;
  p.h = h;
  return generate_mesh(build_surface(m), p);
}

ModuliPoint tilted_pair() { return {2, {1.0, 1.0}, {I, cplx(0.1, 2.0)}, {0.2, 0.5}}; }

struct Genus2 {
  SpinMesh M = mesh(tilted_pair(), 0.04);
  PeriodData P = period_matrix(M);
  ThetaSurface ts = make_theta_surface(P);
};
const Genus2& genus2() {
  static const Genus2 G;
  return G;
}

// Kernel of the twisted d-bar on C/(Z + tau Z), principal part 1/w, automorphy sa, sb,
// as its Fourier series in the strip 0 < Im w < Im tau.
cplx fourier_szego(cplx w, cplx tau, int sa, int sb) {
  // terms decay like exp(-2 pi k min(Im w, Im tau - Im w))
  int K = static_cast<int>(40.0 / (2 * pi * std::min(w.imag(), tau.imag() - w.imag()))) + 2;
  double a = sa > 0 ? 0.0 : 0.5;
  cplx s = 0;
  for (int n = -K; n <= K; ++n) {
    double k = n + a;
    s += std::exp(2 * pi * I * k * w) / (1.0 - double(sb) * std::exp(2 * pi * I * k * tau));
  }
  return -2 * pi * I * s;
}

// a point of torus j away from slits and cones
std::pair<int, cplx> bulk_point(const SpinMesh& M, int j, cplx where) { return PointLocator(M).locate(j, where); }

}  // namespace

TEST(Szego, TorusKernelMatchesFourierSeries) {
  const cplx tau(0.3, 1.2);
  SpinMesh M = mesh({1, {1.0}, {tau}, {}}, 0.08);
  PeriodData P = period_matrix(M);
  ThetaSurface ts = make_theta_surface(P);
  for (auto [sa, sb] : {std::pair{-1, -1}, {1, -1}, {-1, 1}}) {
    ThetaChar c = calibrate_characteristic({sa}, {sb}, ts).characteristic;
    EXPECT_EQ(c.p[0], sa > 0 ? 0.5 : 0.0);
    EXPECT_EQ(c.q[0], sb > 0 ? 0.5 : 0.0);
    SzegoKernel S(ts, c);
    auto [t, z] = bulk_point(M, 0, 0.31 + 0.27 * I);
    for (cplx d : {cplx(0.2, 0.3), cplx(-0.45, 0.9), cplx(0.05, 0.02), cplx(0.7, 1.1)}) {
      cplx ref = fourier_szego(d, tau, sa, sb);
      EXPECT_LT(std::abs(S(t, z, d) - ref), 1e-8 * std::abs(ref)) << c.label() << " d=" << d;
    }
  }
}

TEST(Szego, PeriodicTorusStructureIsOddAndHasNoKernel) {
  SpinMesh M = mesh({1, {1.0}, {cplx(0.3, 1.2)}, {}}, 0.1);
  PeriodData P = period_matrix(M);
  ThetaSurface ts = make_theta_surface(P);
  CalibrationResult r = calibrate_characteristic({1}, {1}, ts);
  EXPECT_FALSE(r.characteristic.even());
  EXPECT_THROW(SzegoKernel(ts, r.characteristic), DegenerateSpinError);
}

TEST(Szego, CalibrationIsABijectionAtGenusTwo) {
  const Genus2& G = genus2();
  std::set<std::string> seen;
  int even = 0;
  for (const SpinStructure& s : enumerate_spin_structures(2)) {
    CalibrationResult r = calibrate_characteristic(s.sigma_a, s.sigma_b, G.ts);
    EXPECT_TRUE(r.parity_matches_arf);
    EXPECT_GE(r.odd_used, 4);
    seen.insert(r.characteristic.label());
    even += r.characteristic.even();
    // idempotent
    SpinStructure once = calibrate(s, G.ts), twice = calibrate(once, G.ts);
    EXPECT_EQ(once.characteristic, twice.characteristic);
    EXPECT_TRUE(twice.calibrated);
  }
  EXPECT_EQ(seen.size(), 16u);
  EXPECT_EQ(even, 10);
}

TEST(Szego, KernelIsAntisymmetric) {
  const Genus2& G = genus2();
  for (const ThetaChar& c : all_characteristics(2)) {
    if (!c.even()) continue;
    SzegoKernel S(G.ts, c);
    for (auto [j, w, d] : {std::tuple{0, cplx(0.7131, 0.3029), cplx(0.1513, 0.1037)}, {1, cplx(0.7093, 1.3121), cplx(-0.2071, 0.3517)}}) {
      auto [t, z] = bulk_point(G.M, j, w);
      PrimeFormValue E = prime_form(G.ts, t, z, d);
      PrimeFormValue Er = prime_form(G.ts, E.end_tri, E.end, -d);
      EXPECT_LT(std::abs(E.value + Er.value), 1e-9 * std::abs(E.value));
      cplx s1 = S(t, z, d), s2 = S(E.end_tri, E.end, -d);
      EXPECT_LT(std::abs(s1 + s2), 1e-9 * std::abs(s1)) << c.label();
    }
  }
}

TEST(Szego, PrincipalPartIsInverseSeparation) {
  const Genus2& G = genus2();
  SzegoKernel S(G.ts, all_characteristics(2)[0]);
  auto [t, z] = bulk_point(G.M, 0, cplx(0.7, 0.3));
  double prev = 0;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    cplx d = std::polar(eps, 0.7);
    double rem = std::abs(S(t, z, d) - 1.0 / d);
    EXPECT_LT(rem, 1.0);
    if (prev > 0) {
      EXPECT_LT(rem, prev + 1e-6);
    }
    prev = rem;
    // the prime form itself is z' - z to first order
    EXPECT_LT(std::abs(prime_form(G.ts, t, z, d).value / d - 1.0), 10 * eps);
  }
}

TEST(Szego, ConstantTermVanishesForEvenSpins) {
  const Genus2& G = genus2();
  for (const ThetaChar& c : all_characteristics(2)) {
    if (!c.even()) continue;
    SzegoKernel S(G.ts, c);
    auto [t, z] = bulk_point(G.M, 1, cplx(0.6, 1.4));
    NearDiagonal nd = szego_near_diagonal(S, t, z);
    EXPECT_LT(std::abs(nd.a0_formula), 1e-10);
    EXPECT_LT(std::abs(nd.a0 - nd.a0_formula), 1e-5) << c.label();
    EXPECT_LT(nd.drift, 1e-5) << c.label();
  }
}

// a1 = S0/12 + (1/2) sum theta_ij/theta v_i v_j with a spin-independent projective connection S0
TEST(Szego, LinearTermSeparatesIntoSpinIndependentPart) {
  const Genus2& G = genus2();
  std::vector<cplx> s0;
  double scale = 0;
  for (const ThetaChar& c : all_characteristics(2)) {
    if (!c.even()) continue;
    SzegoKernel S(G.ts, c);
    auto [t, z] = bulk_point(G.M, 0, cplx(0.6, 0.35));
    NearDiagonal nd = szego_near_diagonal(S, t, z);
    cplx quad = 0.5 * (nd.v.transpose() * nd.theta_hessian_ratio * nd.v)(0, 0);
    s0.push_back(12.0 * (nd.a1 - quad));
    scale = std::max(scale, std::abs(quad));
  }
  ASSERT_EQ(s0.size(), 10u);
  for (cplx s : s0) EXPECT_LT(std::abs(s - s0[0]), 1e-3 * 12 * scale);
}

TEST(Szego, CalibrationDoesNotDependOnTheMesh) {
  SpinMesh M = mesh(tilted_pair(), 0.1);
  PeriodData P = period_matrix(M);
  ThetaSurface ts = make_theta_surface(P);
  for (const SpinStructure& s : enumerate_spin_structures(2))
    EXPECT_EQ(calibrate(s, ts).characteristic, calibrate(s, genus2().ts).characteristic) << s.signs_label();
}

// the per-point choice of odd characteristic changes S(P_i, w) by at most a sign common to all i
TEST(Szego, PointwiseBranchAgreesWithConeBranch) {
  const Genus2& G = genus2();
  SzegoKernel S(G.ts, all_characteristics(2)[0]);
  EXPECT_GT(S.num_branches(), 1);
  PointLocator loc(G.M);
  int tested = 0;
  for (auto [j, w] : {std::pair{0, cplx(0.7, 0.3)}, {0, cplx(0.41, 0.62)}, {1, cplx(0.33, 0.5)}, {1, cplx(0.9, 1.7)}, {1, cplx(0.55, 1.1)}}) {
    auto [t, z] = loc.locate(j, w);
    Eigen::VectorXcd A = upsilon_potential(G.P, t, detail::barycentric(G.M.triangles[t], z));
    Eigen::VectorXcd v = pointwise_v(G.P, t, z);
    // compare only where the cone branch is well conditioned
    if (std::abs(S.h_squared(v)) < 0.3 * v.norm() * G.ts.odd.front().grad.norm()) continue;
    ++tested;
    Eigen::VectorXcd s = S.at_point(A, v);
    cplx h = std::sqrt(S.h_squared(v));
    cplx sign = s[0] / S.from_cone(0, A, h);
    EXPECT_LT(std::abs(std::abs(sign.real()) - 1.0), 1e-2);
    for (int i = 0; i < S.num_cones(); ++i) EXPECT_LT(std::abs(s[i] - sign.real() * S.from_cone(i, A, h)), 1e-2 * std::abs(s[i]));
  }
  EXPECT_GE(tested, 2);
}
