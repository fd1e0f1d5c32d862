#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "spinlap/eigensolver.hpp"

using namespace spinlap;
using std::numbers::pi;
using SpD = Eigen::SparseMatrix<double>;
using SpZ = Eigen::SparseMatrix<std::complex<double>>;

namespace {

// periodic n x n grid Laplacian on the unit square: eigenvalues 4 n^2 (sin^2(pi k/n) + sin^2(pi l/n))
SpD periodic_grid(int n) {
  std::vector<Eigen::Triplet<double>> T;
  double s = double(n) * n;
  auto id = [n](int i, int j) { return ((i + n) % n) * n + (j + n) % n; };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      int p = id(i, j);
      T.emplace_back(p, p, 4 * s);
      for (int q : {id(i + 1, j), id(i - 1, j), id(i, j + 1), id(i, j - 1)}) T.emplace_back(p, q, -s);
    }
  SpD K(n * n, n * n);
  K.setFromTriplets(T.begin(), T.end());
  return K;
}

SpD identity(int n) {
  SpD I(n, n);
  I.setIdentity();
  return I;
}

std::vector<double> grid_spectrum(int n) {
  std::vector<double> ev;
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) {
      double a = std::sin(pi * k / n), b = std::sin(pi * l / n);
      ev.push_back(4.0 * n * n * (a * a + b * b));
    }
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace

TEST(Eigensolver, InertiaCountsThePeriodicGrid) {
  const int n = 24;
  GeneralizedEigensolver<double> es(periodic_grid(n), identity(n * n));
  auto ev = grid_spectrum(n);
  for (double s : {-1.0, 10.0, 500.0, 2000.0, 5000.0}) {
    int c = static_cast<int>(std::lower_bound(ev.begin(), ev.end(), s) - ev.begin());
    EXPECT_EQ(es.count_below(s), c) << s;
  }
}

TEST(Eigensolver, LowestModesWithHighMultiplicity) {
  const int n = 32;
  GeneralizedEigensolver<double> es(periodic_grid(n), identity(n * n));
  auto r = es.lowest(120);
  auto ev = grid_spectrum(n);
  ASSERT_EQ(r.values.size(), 120);
  for (int i = 0; i < 120; ++i) {
    EXPECT_NEAR(r.values[i], ev[i], 1e-8 * std::max(1.0, ev[i])) << i;
    EXPECT_LT(r.residuals[i], 1e-8);
  }
  // M-orthonormal vectors
  Eigen::MatrixXd G = r.vectors.transpose() * r.vectors;
  EXPECT_LT((G - Eigen::MatrixXd::Identity(120, 120)).norm(), 1e-8);
}

TEST(Eigensolver, MatchesDenseReferenceOnRandomPencil) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> U(-1, 1);
  const int n = 300;
  // K = B^T B sparse PSD, M diagonally dominant SPD
  std::vector<Eigen::Triplet<double>> tb, tm;
  for (int i = 0; i < n; ++i) {
    tb.emplace_back(i, i, 2.0 + U(rng));
    tb.emplace_back(i, (i + 7) % n, U(rng));
    tb.emplace_back(i, (i * 13 + 1) % n, U(rng));
    tm.emplace_back(i, i, 3.0 + U(rng));
    tm.emplace_back(i, (i + 1) % n, 0.5);
    tm.emplace_back((i + 1) % n, i, 0.5);
  }
  SpD B(n, n), M(n, n);
  B.setFromTriplets(tb.begin(), tb.end());
  M.setFromTriplets(tm.begin(), tm.end());
  SpD K = SpD(B.transpose()) * B;
  auto ref = dense_generalized_eigenvalues<double>(K, M);
  GeneralizedEigensolver<double> es(K, M);
  auto r = es.lowest(80);
  for (int i = 0; i < 80; ++i) EXPECT_NEAR(r.values[i], ref[i], 1e-9 * std::max(1.0, ref[i]));
  auto w = es.interval(ref[100] - 1e-7, ref[140] + 1e-7, false);
  ASSERT_EQ(w.values.size(), 41);
  for (int i = 0; i < 41; ++i) EXPECT_NEAR(w.values[i], ref[100 + i], 1e-9 * ref[100 + i]);
}

TEST(Eigensolver, ComplexHermitianPencil) {
  // magnetic periodic ring: eigenvalues 2 - 2 cos(2 pi (k + a)/n) scaled
  const int n = 400;
  const double a = 0.3;
  std::vector<Eigen::Triplet<std::complex<double>>> t;
  std::complex<double> ph = std::polar(1.0, 2 * pi * a / n);
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 2.0);
    t.emplace_back(i, (i + 1) % n, -std::conj(ph));
    t.emplace_back((i + 1) % n, i, -ph);
  }
  SpZ K(n, n), M(n, n);
  K.setFromTriplets(t.begin(), t.end());
  M.setIdentity();
  std::vector<double> ev;
  for (int k = 0; k < n; ++k) ev.push_back(2 - 2 * std::cos(2 * pi * (k + a) / n));
  std::sort(ev.begin(), ev.end());
  GeneralizedEigensolver<std::complex<double>> es(K, M);
  auto r = es.lowest(50);
  for (int i = 0; i < 50; ++i) EXPECT_NEAR(r.values[i], ev[i], 1e-12 + 1e-9 * ev[i]);
  auto ref = dense_generalized_eigenvalues<std::complex<double>>(K, M);
  for (int i = 0; i < 50; ++i) EXPECT_NEAR(ref[i], ev[i], 1e-11);
}

TEST(Eigensolver, RejectsNegativeSpectrum) {
  SpD K = periodic_grid(6);
  SpD M = identity(36);
  SpD Kneg = K - 5.0 * M;
  GeneralizedEigensolver<double> es(Kneg, M);
  EXPECT_THROW(es.lowest(3), EigensolverError);
}
