// Riemann theta functions with half-integer characteristics.
//
//   theta[p,q](xi|B) = sum_{n in Z^g} exp( i pi (n+p)^T B (n+p) + 2 pi i (n+p)^T (xi+q) )
//
// The sum runs over an ellipsoid in Z^g found by Fincke-Pohst enumeration
// around the dominant lattice point; derivatives in xi and in the entries of B
// are taken term by term.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <complex>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinlap {

using cplx = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

struct ThetaChar {
  std::vector<double> p, q;  // entries in {0, 1/2}

  int genus() const { return static_cast<int>(p.size()); }
  // 0 even, 1 odd.
  int parity() const {
    int s = 0;
    for (size_t i = 0; i < p.size(); ++i) s += static_cast<int>(std::lround(4.0 * p[i] * q[i]));
    return s & 1;
  }
  bool even() const { return parity() == 0; }
  std::string label() const {
    std::ostringstream os;
    os << '[';
    for (double v : p) os << (v != 0.0 ? '1' : '0');
    os << '|';
    for (double v : q) os << (v != 0.0 ? '1' : '0');
    os << ']';
    return os.str();
  }
  bool operator==(const ThetaChar&) const = default;
};

// All 4^g characteristics, ordered by the binary digits of (p, q).
inline std::vector<ThetaChar> all_characteristics(int g) {
  std::vector<ThetaChar> out;
  for (int mask = 0; mask < (1 << (2 * g)); ++mask) {
    ThetaChar c{std::vector<double>(g), std::vector<double>(g)};
    for (int i = 0; i < g; ++i) {
      c.p[i] = (mask >> i) & 1 ? 0.5 : 0.0;
      c.q[i] = (mask >> (g + i)) & 1 ? 0.5 : 0.0;
    }
    out.push_back(std::move(c));
  }
  return out;
}

struct ThetaResult {
  cplx value;
  VectorXcd grad;  // d/dxi_i
  MatrixXcd hess;  // d^2/dxi_i dxi_j
  MatrixXcd dB;    // d/dB_ij with B_ij, B_ji independent
};

class ThetaEvaluator {
 public:
  explicit ThetaEvaluator(MatrixXcd B, double tol = 1e-12) : B_(std::move(B)), tol_(tol) {
    const int g = static_cast<int>(B_.rows());
    if (g < 1 || B_.cols() != g) throw std::invalid_argument("theta: B must be square");
    Y_ = B_.imag();
    Y_ = 0.5 * (Y_ + Y_.transpose()).eval();
    Eigen::LLT<MatrixXd> llt(Y_);
    if (llt.info() != Eigen::Success) throw std::domain_error("theta: Im B not positive definite");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Y_);
    if (es.eigenvalues().minCoeff() <= 0.0) throw std::domain_error("theta: Im B not positive definite");
    R_ = llt.matrixU();
    Yinv_ = llt.solve(MatrixXd::Identity(g, g));
    set_tolerance(tol);
  }

  int genus() const { return static_cast<int>(B_.rows()); }
  const MatrixXcd& period_matrix() const { return B_; }
  double tolerance() const { return tol_; }
  double radius() const { return radius_; }

  // Ellipsoid radius: terms outside carry weight below exp(-pi rho^2) relative
  // to the dominant term; the margin pays for the lattice-point count and the
  // polynomial factors of second derivatives.
  void set_tolerance(double tol) {
    tol_ = tol;
    const int g = genus();
    radius_ = std::sqrt((-std::log(tol) + 4.0 * g + 10.0) / std::numbers::pi);
  }
  void set_radius(double rho) { radius_ = rho; }

  ThetaResult evaluate(const ThetaChar& c, const VectorXcd& xi, int order = 0, bool with_dB = false) const {
    const int g = genus();
    if (c.genus() != g || xi.size() != g) throw std::invalid_argument("theta: dimension mismatch");
    ThetaResult r{0.0, VectorXcd::Zero(g), MatrixXcd::Zero(g, g), MatrixXcd::Zero(g, g)};
    VectorXd p = Eigen::Map<const VectorXd>(c.p.data(), g);
    VectorXd q = Eigen::Map<const VectorXd>(c.q.data(), g);
    VectorXd center = -Yinv_ * xi.imag() - p;
    VectorXcd shift = xi + q.cast<cplx>();
    const double twopi = 2.0 * std::numbers::pi;
    const cplx ipi(0.0, std::numbers::pi);
    enumerate(center, [&](const VectorXd& n) {
      VectorXd m = n + p;
      VectorXcd mc = m.cast<cplx>();
      cplx expo = ipi * (mc.transpose() * B_ * mc)(0, 0) + cplx(0.0, twopi) * (mc.transpose() * shift)(0, 0);
      cplx term = std::exp(expo);
      r.value += term;
      if (order >= 1) r.grad += cplx(0.0, twopi) * term * mc;
      if (order >= 2) r.hess += -twopi * twopi * term * (m * m.transpose()).cast<cplx>();
      if (with_dB) r.dB += ipi * term * (m * m.transpose()).cast<cplx>();
    });
    return r;
  }

  cplx value(const ThetaChar& c, const VectorXcd& xi) const { return evaluate(c, xi, 0).value; }
  VectorXcd gradient(const ThetaChar& c, const VectorXcd& xi) const { return evaluate(c, xi, 1).grad; }
  MatrixXcd hessian(const ThetaChar& c, const VectorXcd& xi) const { return evaluate(c, xi, 2).hess; }

  // max_ij | d theta/dB_ij - (1/(4 pi i)) d^2 theta / dxi_i dxi_j |
  double heat_equation_residual(const ThetaChar& c, const VectorXcd& xi) const {
    ThetaResult r = evaluate(c, xi, 2, true);
    MatrixXcd rhs = r.hess / cplx(0.0, 4.0 * std::numbers::pi);
    return (r.dB - rhs).cwiseAbs().maxCoeff();
  }

  // Number of lattice points the evaluator visits at this xi.
  long lattice_points(const ThetaChar& c, const VectorXcd& xi) const {
    VectorXd p = Eigen::Map<const VectorXd>(c.p.data(), genus());
    long count = 0;
    enumerate(-Yinv_ * xi.imag() - p, [&](const VectorXd&) { ++count; });
    return count;
  }

 private:
  // Visit all n in Z^g with (n-c)^T Y (n-c) <= radius^2.
  template <class F>
  void enumerate(const VectorXd& c, F&& f) const {
    const int g = genus();
    VectorXd n(g);
    const double r2 = radius_ * radius_;
    // Q(n) = sum_i ( R_ii (n_i - c_i) + sum_{j>i} R_ij (n_j - c_j) )^2
    std::function<void(int, double)> rec = [&](int i, double used) {
      double s = 0.0;
      for (int j = i + 1; j < g; ++j) s += R_(i, j) * (n[j] - c[j]);
      double rii = R_(i, i);
      double centre = c[i] - s / rii;
      double half = std::sqrt(std::max(0.0, r2 - used)) / rii;
      long lo = static_cast<long>(std::ceil(centre - half));
      long hi = static_cast<long>(std::floor(centre + half));
      for (long k = lo; k <= hi; ++k) {
        n[i] = static_cast<double>(k);
        double d = rii * (k - centre);
        double u = used + d * d;
        if (u > r2) continue;
        if (i == 0)
          f(n);
        else
          rec(i - 1, u);
      }
    };
    rec(g - 1, 0.0);
  }

  MatrixXcd B_;
  MatrixXd Y_, Yinv_, R_;
  double tol_;
  double radius_ = 0.0;
};

// Random point of the Siegel upper half space: symmetric real part in
// [-1/2,1/2], imaginary part W W^T + I/2 with W entries in [-1/2,1/2].
inline MatrixXcd random_siegel_point(int g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  MatrixXd X(g, g), W(g, g);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j <= i; ++j) X(i, j) = X(j, i) = u(rng);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) W(i, j) = u(rng);
  MatrixXd Y = W * W.transpose() + 0.5 * MatrixXd::Identity(g, g);
  MatrixXcd B(g, g);
  B.real() = X;
  B.imag() = Y;
  return B;
}

struct ThetaSelftestRow {
  int g;
  std::string characteristic;
  std::string test;
  double residual;
};

// Heat equation, both quasi-periodicities and the parity symmetry at random
// Siegel points; one row per (g, characteristic, test) holding the maximum
// residual across the sampled points.
inline std::vector<ThetaSelftestRow> theta_selftest(int gmax, int points, std::uint64_t seed) {
  std::vector<ThetaSelftestRow> rows;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const double pi = std::numbers::pi;
  for (int g = 1; g <= gmax; ++g) {
    auto chars = all_characteristics(g);
    std::vector<double> heat(chars.size(), 0.0), qa(chars.size(), 0.0), qb(chars.size(), 0.0), par(chars.size(), 0.0);
    for (int s = 0; s < points; ++s) {
      MatrixXcd B = random_siegel_point(g, rng);
      ThetaEvaluator th(B);
      VectorXcd xi(g);
      for (int i = 0; i < g; ++i) xi[i] = cplx(u(rng), 0.5 * u(rng));
      for (size_t k = 0; k < chars.size(); ++k) {
        const ThetaChar& c = chars[k];
        heat[k] = std::max(heat[k], th.heat_equation_residual(c, xi));
        cplx v = th.value(c, xi);
        for (int j = 0; j < g; ++j) {
          VectorXcd xa = xi;
          xa[j] += 1.0;
          cplx fa = std::exp(cplx(0.0, 2.0 * pi * c.p[j]));
          qa[k] = std::max(qa[k], std::abs(th.value(c, xa) - fa * v));
          VectorXcd xb = xi + B.col(j);
          cplx fb = std::exp(cplx(0.0, -2.0 * pi * c.q[j]) - cplx(0.0, pi) * B(j, j) - cplx(0.0, 2.0 * pi) * xi[j]);
          qb[k] = std::max(qb[k], std::abs(th.value(c, xb) - fb * v));
        }
        double sign = c.even() ? 1.0 : -1.0;
        par[k] = std::max(par[k], std::abs(th.value(c, -xi) - sign * v));
      }
    }
    for (size_t k = 0; k < chars.size(); ++k) {
      rows.push_back({g, chars[k].label(), "heat_equation", heat[k]});
      rows.push_back({g, chars[k].label(), "quasi_periodicity_a", qa[k]});
      rows.push_back({g, chars[k].label(), "quasi_periodicity_b", qb[k]});
      rows.push_back({g, chars[k].label(), "parity", par[k]});
    }
  }
  return rows;
}

}  // namespace spinlap
