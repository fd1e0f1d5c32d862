// Quadrature rules: Gauss-Legendre on [-1,1] and collapsed (Duffy) product
// rules on the reference triangle.
#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace spinlap {

class GaussLegendre {
 public:
  explicit GaussLegendre(int n) : x_(n), w_(n) {
    if (n < 1) throw std::invalid_argument("GaussLegendre: n < 1");
    using std::numbers::pi;
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double z = std::cos(pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int k = 1; k <= n; ++k) {
          double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        double dz = p0 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      x_[i] = -z;
      x_[n - 1 - i] = z;
      w_[i] = w_[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }
  int size() const { return static_cast<int>(x_.size()); }
  double node(int i) const { return x_[i]; }
  double weight(int i) const { return w_[i]; }

  // Integrate f over [a,b].
  template <class F>
  auto integrate(F&& f, double a, double b) const {
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    decltype(f(c)) acc{};
    for (int i = 0; i < size(); ++i) acc += w_[i] * f(c + h * x_[i]);
    return acc * h;
  }

 private:
  std::vector<double> x_, w_;
};

struct TrianglePoint {
  double xi, eta, w;  // barycentric-type coordinates on {xi,eta >= 0, xi+eta <= 1}; w sums to 1/2
};

// Collapsed product rule on the reference triangle with n x n points. Exact for
// polynomials of degree 2n-2; the Jacobian u absorbs an r^{-1} singularity at
// the collapsed vertex (xi,eta) = (0,0).
inline std::vector<TrianglePoint> collapsed_triangle_rule(int n) {
  GaussLegendre gl(n);
  std::vector<TrianglePoint> pts;
  pts.reserve(n * n);
  for (int i = 0; i < n; ++i) {
    double u = 0.5 * (1.0 + gl.node(i));  // radial-like coordinate from the origin
    for (int j = 0; j < n; ++j) {
      double v = 0.5 * (1.0 + gl.node(j));
      double w = 0.25 * gl.weight(i) * gl.weight(j) * u;
      pts.push_back({u * (1.0 - v), u * v, w});
    }
  }
  return pts;
}

// Symmetric 6-point degree-4 rule (sufficient for P2 stiffness and mass).
inline const std::vector<TrianglePoint>& triangle_rule_deg4() {
  static const std::vector<TrianglePoint> pts = [] {
    const double a1 = 0.445948490915965, w1 = 0.223381589678011 * 0.5;
    const double a2 = 0.091576213509771, w2 = 0.109951743655322 * 0.5;
    return std::vector<TrianglePoint>{
        {a1, a1, w1}, {1 - 2 * a1, a1, w1}, {a1, 1 - 2 * a1, w1},
        {a2, a2, w2}, {1 - 2 * a2, a2, w2}, {a2, 1 - 2 * a2, w2}};
  }();
  return pts;
}

}  // namespace spinlap
