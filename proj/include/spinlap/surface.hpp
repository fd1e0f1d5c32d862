// Translation surfaces glued from slit tori.
//
// Torus j (0-based) is C / (Z A_j + Z B_j). For g >= 2 there are g-1 slits;
// slit s is the segment [C_{2s}, C_{2s+1}] drawn on both tori s and s+1, which
// are cut open along it and cross-glued (upper bank of one torus to the lower
// bank of the other). The slit ends are the 2g-2 cone points, each of total
// angle 4 pi, and omega = dz on every torus.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinlap {

using cplx = std::complex<double>;

struct InvalidModuli : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ModuliPoint {
  int genus = 1;
  std::vector<cplx> A, B, C;
};

// Real coordinates (u, v) with z = u a + v b.
inline std::array<double, 2> lattice_coords(cplx z, cplx a, cplx b) {
  double det = a.real() * b.imag() - a.imag() * b.real();
  double u = (z.real() * b.imag() - z.imag() * b.real()) / det;
  double v = (a.real() * z.imag() - a.imag() * z.real()) / det;
  return {u, v};
}

struct Torus {
  cplx A, B;    // user basis of the lattice
  cplx e1, e2;  // Lagrange-reduced basis, |e1| <= |e2|, Im(e2/e1) > 0
  // e1 = M00 A + M01 B, e2 = M10 A + M11 B
  std::array<std::array<int, 2>, 2> M{};
  double area() const { return std::abs((std::conj(A) * B).imag()); }
  // Integer (m, n) with w = m A + n B for a lattice vector w (rounded).
  std::array<long, 2> user_counts(cplx w) const {
    auto uv = lattice_coords(w, A, B);
    return {std::lround(uv[0]), std::lround(uv[1])};
  }
};

inline Torus make_torus(cplx A, cplx B) {
  if (!((B / A).imag() > 0.0)) throw InvalidModuli("torus lattice degenerate or negatively oriented: Im(B/A) <= 0");
  Torus t{A, B, A, B, {{{1, 0}, {0, 1}}}};
  // Lagrange reduction with the integer transform tracked.
  cplx u = A, v = B;
  int mu[2] = {1, 0}, mv[2] = {0, 1};
  for (int it = 0; it < 200; ++it) {
    if (std::norm(v) < std::norm(u)) {
      std::swap(u, v);
      std::swap(mu[0], mv[0]);
      std::swap(mu[1], mv[1]);
    }
    double k = std::round((u * std::conj(v)).real() / std::norm(u));
    if (k == 0.0) break;
    v -= k * u;
    mv[0] -= static_cast<int>(k) * mu[0];
    mv[1] -= static_cast<int>(k) * mu[1];
  }
  if ((v / u).imag() < 0) {
    v = -v;
    mv[0] = -mv[0];
    mv[1] = -mv[1];
  }
  t.e1 = u;
  t.e2 = v;
  t.M = {{{mu[0], mu[1]}, {mv[0], mv[1]}}};
  return t;
}

struct Slit {
  cplx c0, c1;  // endpoints in the common plane of the two tori
  int torus_lo, torus_hi;
  int cone_lo, cone_hi;  // cone indices of c0 and c1
  cplx direction() const { return c1 - c0; }
  double length() const { return std::abs(c1 - c0); }
};

struct ConePoint {
  cplx position;
  int slit;
  int end;  // 0: left end c0, 1: right end c1
  std::array<int, 2> tori;
  double angle = 4.0 * std::numbers::pi;
};

struct TranslationSurface {
  ModuliPoint moduli;
  int genus = 1;
  std::vector<Torus> tori;
  std::vector<Slit> slits;
  std::vector<ConePoint> cones;
};

namespace detail {

inline double point_segment_distance(cplx p, cplx a, cplx b) {
  cplx d = b - a;
  double t = std::clamp(((p - a) * std::conj(d)).real() / std::norm(d), 0.0, 1.0);
  return std::abs(p - (a + t * d));
}

inline bool segments_cross(cplx a, cplx b, cplx c, cplx d) {
  auto orient = [](cplx p, cplx q, cplx r) { return ((q - p) * std::conj(r - p)).imag(); };
  double o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  return (o1 * o2 < 0) && (o3 * o4 < 0);
}

inline double segment_distance(cplx a, cplx b, cplx c, cplx d) {
  if (segments_cross(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d), point_segment_distance(c, a, b),
                   point_segment_distance(d, a, b)});
}

// Minimum distance between segment [a,b] and all lattice translates of [c,d]
// (excluding the identity translate when `skip_zero`).
inline double lattice_segment_distance(const Torus& t, cplx a, cplx b, cplx c, cplx d, bool skip_zero) {
  double best = 1e300;
  int R = 2 + static_cast<int>(std::ceil((std::abs(b - a) + std::abs(d - c)) / std::abs(t.e1)));
  for (int m = -R; m <= R; ++m)
    for (int n = -R; n <= R; ++n) {
      if (skip_zero && m == 0 && n == 0) continue;
      cplx w = double(m) * t.e1 + double(n) * t.e2;
      best = std::min(best, segment_distance(a, b, c + w, d + w));
    }
  return best;
}

}  // namespace detail

inline TranslationSurface build_surface(const ModuliPoint& m) {
  const int g = m.genus;
  if (g < 1) throw InvalidModuli("genus must be >= 1");
  if (static_cast<int>(m.A.size()) != g || static_cast<int>(m.B.size()) != g)
    throw InvalidModuli("expected " + std::to_string(g) + " values in A and in B");
  if (static_cast<int>(m.C.size()) != std::max(0, 2 * g - 2))
    throw InvalidModuli("expected " + std::to_string(std::max(0, 2 * g - 2)) + " slit endpoints in C");
  TranslationSurface s;
  s.moduli = m;
  s.genus = g;
  for (int j = 0; j < g; ++j) s.tori.push_back(make_torus(m.A[j], m.B[j]));
  double area = 0.0;
  for (int j = 0; j < g; ++j) area += -(m.A[j] * std::conj(m.B[j])).imag();
  if (!(area > 0.0)) throw InvalidModuli("non-positive total area");
  for (int k = 0; k + 1 < g; ++k) {
    Slit sl{m.C[2 * k], m.C[2 * k + 1], k, k + 1, 2 * k, 2 * k + 1};
    for (int j : {sl.torus_lo, sl.torus_hi}) {
      const Torus& t = s.tori[j];
      // endpoints distinct modulo the lattice, and the slit embedded
      auto uv = lattice_coords(sl.c1 - sl.c0, t.e1, t.e2);
      cplx w = std::round(uv[0]) * t.e1 + std::round(uv[1]) * t.e2;
      if (std::abs(sl.c1 - sl.c0 - w) < 1e-12 * std::abs(t.e1))
        throw InvalidModuli("slit " + std::to_string(k) + " has coinciding endpoints modulo the lattice of torus " + std::to_string(j));
      if (detail::lattice_segment_distance(t, sl.c0, sl.c1, sl.c0, sl.c1, true) < 1e-9 * std::abs(t.e1))
        throw InvalidModuli("slit " + std::to_string(k) + " overlaps its own lattice translate on torus " + std::to_string(j));
    }
    s.slits.push_back(sl);
  }
  // slits sharing a torus must be disjoint
  for (size_t a = 0; a < s.slits.size(); ++a)
    for (size_t b = a + 1; b < s.slits.size(); ++b) {
      const Slit &p = s.slits[a], &q = s.slits[b];
      for (int j : {p.torus_lo, p.torus_hi}) {
        if (j != q.torus_lo && j != q.torus_hi) continue;
        if (detail::lattice_segment_distance(s.tori[j], p.c0, p.c1, q.c0, q.c1, false) < 1e-9)
          throw InvalidModuli("slits " + std::to_string(a) + " and " + std::to_string(b) + " overlap on torus " + std::to_string(j));
      }
    }
  for (size_t k = 0; k < s.slits.size(); ++k) {
    const Slit& sl = s.slits[k];
    s.cones.push_back({sl.c0, static_cast<int>(k), 0, {sl.torus_lo, sl.torus_hi}});
    s.cones.push_back({sl.c1, static_cast<int>(k), 1, {sl.torus_lo, sl.torus_hi}});
  }
  return s;
}

// Area of (X, |omega|^2) as the sum of torus areas.
inline double flat_area(const TranslationSurface& s) {
  double a = 0.0;
  for (const auto& t : s.tori) a += t.area();
  return a;
}

inline double moduli_area(const ModuliPoint& m) {
  double a = 0.0;
  for (int j = 0; j < m.genus; ++j) a += -(m.A[j] * std::conj(m.B[j])).imag();
  return a;
}

}  // namespace spinlap
