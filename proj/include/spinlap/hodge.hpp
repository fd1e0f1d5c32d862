// Harmonic 1-forms, the normalized holomorphic differentials and the period
// matrix of a slit-torus surface.
//
// The class dual to a_j (resp. b_j) is represented by a multivalued P1
// potential: the lattice coordinate u_j (resp. v_j) of z = u A_j + v B_j on
// torus j, continued off torus j by its values along the slits it shares, and
// zero elsewhere. Its jumps across edges are integers, so adding the single
// valued P2 correction that makes it co-closed does not move its periods:
// they are the identity matrix by construction. With S the energy Gram matrix
// of the 2g harmonic forms, the bilinear relations give B = S_bb^{-1}(i - S_ba).
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinlap/homology_spin.hpp"
#include "spinlap/mesh.hpp"
#include "spinlap/quadrature.hpp"
#include "spinlap/spectral.hpp"

namespace spinlap {

struct HodgeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct HarmonicForm {
  int torus = 0;
  char kind = 'a';  // 'a': periods delta on the a-cycles, 'b': on the b-cycles
  std::vector<std::array<double, 3>> lift;  // P1 potential at each triangle corner
  Eigen::VectorXd correction;               // single-valued scalar P2 part
  double residual = 0.0;                    // co-closedness defect relative to the absolute load
};

struct HarmonicBasis {
  DofMap dofs;
  std::vector<HarmonicForm> forms;  // a-duals of tori 0..g-1, then b-duals
  Eigen::MatrixXd gram;             // integral of eta_k . eta_l
  Eigen::MatrixXd wedge;            // integral of eta_k ^ eta_l
  double residual = 0.0;
};

namespace detail {

inline std::array<double, 3> barycentric(const MeshTriangle& T, cplx z) {
  double A2 = 2 * T.area();
  auto cr = [](cplx a, cplx b) { return (std::conj(a) * b).imag(); };
  double l1 = cr(T.z[2] - T.z[0], z - T.z[0]) / -A2;
  double l2 = cr(T.z[1] - T.z[0], z - T.z[0]) / A2;
  return {1 - l1 - l2, l1, l2};
}

inline double lattice_coordinate(const Torus& T, char kind, cplx z) {
  auto uv = lattice_coords(z, T.A, T.B);
  return kind == 'a' ? uv[0] : uv[1];
}

// Slit index carried by a vertex (cones included), -1 otherwise.
inline int vertex_slit(const SpinMesh& M, int v) {
  const MeshVertex& V = M.vertices[v];
  if (V.cone >= 0) return M.surface.cones[V.cone].slit;
  return V.slit;
}

// The point of slit s in the common plane that a vertex represents.
inline cplx slit_point(const SpinMesh& M, int v, int s) {
  const Slit& sl = M.surface.slits[s];
  const Torus& T = M.surface.tori[M.vertices[v].torus];
  cplx z = M.vertices[v].z, best = z;
  double bd = 1e300;
  cplx base = z - round_to_lattice(z - sl.c0, T.e1, T.e2);
  for (int m = -2; m <= 2; ++m)
    for (int n = -2; n <= 2; ++n) {
      cplx w = base + double(m) * T.e1 + double(n) * T.e2;
      double d = point_segment_distance(w, sl.c0, sl.c1);
      if (d < bd) {
        bd = d;
        best = w;
      }
    }
  if (bd > 1e-9 * (1 + sl.length())) throw HodgeError("slit vertex " + std::to_string(v) + " is off its slit");
  return best;
}

inline std::vector<std::array<double, 3>> class_lift(const SpinMesh& M, int j, char kind) {
  const Torus& T = M.surface.tori[j];
  std::vector<double> F(M.num_vertices(), 0.0);
  for (int v = 0; v < M.num_vertices(); ++v) {
    int s = vertex_slit(M, v);
    if (s < 0) continue;
    const Slit& sl = M.surface.slits[s];
    if (sl.torus_lo != j && sl.torus_hi != j) continue;
    F[v] = lattice_coordinate(T, kind, slit_point(M, v, s));
  }
  std::vector<std::array<double, 3>> lift(M.num_triangles());
  for (int t = 0; t < M.num_triangles(); ++t) {
    const MeshTriangle& tr = M.triangles[t];
    for (int a = 0; a < 3; ++a) lift[t][a] = tr.torus == j ? lattice_coordinate(T, kind, tr.z[a]) : F[tr.v[a]];
  }
  return lift;
}

inline cplx lift_gradient(const P2Element& E, const std::array<double, 3>& p) {
  return p[0] * E.g[0] + p[1] * E.g[1] + p[2] * E.g[2];
}

}  // namespace detail

// Gradient (as gx + i gy) and value of a form's potential at barycentric L of triangle t.
inline cplx form_gradient(const SpinMesh& M, const HarmonicBasis& hb, int f, int t, const std::array<double, 3>& L) {
  detail::P2Element E(M.triangles[t]);
  cplx G[6];
  E.gradients(L, G);
  const HarmonicForm& F = hb.forms[f];
  cplx s = detail::lift_gradient(E, F.lift[t]);
  for (int a = 0; a < 6; ++a) s += F.correction[hb.dofs.dof[t][a]] * G[a];
  return s;
}

inline double form_potential(const SpinMesh& M, const HarmonicBasis& hb, int f, int t, const std::array<double, 3>& L) {
  double phi[6];
  detail::P2Element::values(L, phi);
  const HarmonicForm& F = hb.forms[f];
  double s = L[0] * F.lift[t][0] + L[1] * F.lift[t][1] + L[2] * F.lift[t][2];
  for (int a = 0; a < 6; ++a) s += F.correction[hb.dofs.dof[t][a]] * phi[a];
  return s;
}

inline HarmonicBasis harmonic_basis(const SpinMesh& M) {
  const int g = M.surface.genus;
  HarmonicBasis hb;
  hb.dofs = scalar_dof_map(M);
  const int n = hb.dofs.num_dofs;
  const auto& rule = triangle_rule_deg4();

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(36 * M.num_triangles());
  for (int t = 0; t < M.num_triangles(); ++t) {
    detail::P2Element E(M.triangles[t]);
    double k[6][6] = {};
    for (const auto& qp : rule) {
      cplx G[6];
      E.gradients({1 - qp.xi - qp.eta, qp.xi, qp.eta}, G);
      double w = qp.w * 2 * E.area;
      for (int a = 0; a < 6; ++a)
        for (int b = a; b < 6; ++b) k[a][b] += w * (std::conj(G[a]) * G[b]).real();
    }
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b) trip.emplace_back(hb.dofs.dof[t][a], hb.dofs.dof[t][b], a <= b ? k[a][b] : k[b][a]);
  }
  SparseD K(n, n);
  K.setFromTriplets(trip.begin(), trip.end());

  // constants span the kernel; pinning one dof leaves a definite system
  std::vector<Eigen::Triplet<double>> pinned;
  pinned.reserve(K.nonZeros());
  for (int c = 0; c < K.outerSize(); ++c)
    for (SparseD::InnerIterator it(K, c); it; ++it)
      if (it.row() != 0 && it.col() != 0) pinned.emplace_back(it.row(), it.col(), it.value());
  pinned.emplace_back(0, 0, 1.0);
  SparseD Kp(n, n);
  Kp.setFromTriplets(pinned.begin(), pinned.end());
  Eigen::SimplicialLDLT<SparseD> ldlt(Kp);
  if (ldlt.info() != Eigen::Success) throw HodgeError("scalar stiffness factorization failed (mesh quality)");

  for (char kind : {'a', 'b'})
    for (int j = 0; j < g; ++j) {
      HarmonicForm F;
      F.torus = j;
      F.kind = kind;
      F.lift = detail::class_lift(M, j, kind);
      Eigen::VectorXd r = Eigen::VectorXd::Zero(n), scale = Eigen::VectorXd::Zero(n);
      for (int t = 0; t < M.num_triangles(); ++t) {
        detail::P2Element E(M.triangles[t]);
        cplx gp = detail::lift_gradient(E, F.lift[t]);
        for (const auto& qp : rule) {
          cplx G[6];
          E.gradients({1 - qp.xi - qp.eta, qp.xi, qp.eta}, G);
          double w = qp.w * 2 * E.area;
          for (int a = 0; a < 6; ++a) {
            r[hb.dofs.dof[t][a]] -= w * (std::conj(G[a]) * gp).real();
            scale[hb.dofs.dof[t][a]] += w * std::abs(G[a]) * std::abs(gp);
          }
        }
      }
      Eigen::VectorXd rp = r;
      rp[0] = 0;
      F.correction = ldlt.solve(rp);
      if (ldlt.info() != Eigen::Success || !F.correction.allFinite()) throw HodgeError("harmonic projection solve failed");
      F.residual = (K * F.correction - r).norm() / std::max(scale.norm(), 1e-300);
      hb.residual = std::max(hb.residual, F.residual);
      hb.forms.push_back(std::move(F));
    }

  const int nf = 2 * g;
  hb.gram = Eigen::MatrixXd::Zero(nf, nf);
  hb.wedge = Eigen::MatrixXd::Zero(nf, nf);
  std::vector<cplx> eta(nf);
  for (int t = 0; t < M.num_triangles(); ++t) {
    double w2 = 2 * M.triangles[t].area();
    for (const auto& qp : rule) {
      std::array<double, 3> L{1 - qp.xi - qp.eta, qp.xi, qp.eta};
      for (int f = 0; f < nf; ++f) eta[f] = form_gradient(M, hb, f, t, L);
      for (int a = 0; a < nf; ++a)
        for (int b = 0; b < nf; ++b) {
          cplx p = std::conj(eta[a]) * eta[b];
          hb.gram(a, b) += qp.w * w2 * p.real();
          hb.wedge(a, b) += qp.w * w2 * p.imag();
        }
    }
  }
  hb.gram = 0.5 * (hb.gram + hb.gram.transpose()).eval();
  return hb;
}

struct HodgeOptions {
  double cauchy_radius = 0.5;     // circle |z| = this * chart radius, in the x chart
  double exclusion_radius = 0.25; // plain reconstruction is not used closer than this * chart radius
  int cauchy_nodes = 96;
};

// Abel potential on a circle of the distinguished coordinate at one cone. In
// x the differential is f(x) dx with f = v x holomorphic, so the potential's
// Fourier modes give f and its derivatives without differentiating the mesh.
struct ConeCircle {
  double rho = 0.0;      // |x| on the circle
  std::vector<cplx> x;   // nodes
  Eigen::MatrixXcd psi;  // nodes x g, unwrapped potential
  Eigen::VectorXcd f0;   // lim x v(x) at the cone
};

struct PeriodData {
  const SpinMesh* mesh = nullptr;  // must outlive this object
  HarmonicBasis basis;
  HodgeOptions options;
  int genus = 0;
  Eigen::MatrixXcd B_matrix;
  Eigen::MatrixXcd coeff;  // upsilon_k = sum_f coeff(k, f) eta_f
  double residual = 0.0;
  double symmetry_defect = 0.0;
  std::vector<ConeCircle> circles;
};

// Complex potential of upsilon (a multivalued Abel-map lift) at barycentric L in triangle t.
inline Eigen::VectorXcd upsilon_potential(const PeriodData& P, int t, const std::array<double, 3>& L) {
  const int nf = 2 * P.genus;
  Eigen::VectorXd pot(nf);
  for (int f = 0; f < nf; ++f) pot[f] = form_potential(*P.mesh, P.basis, f, t, L);
  return P.coeff * pot;
}

// upsilon_k = v_k dz d-bar part is returned in `dbar` when requested (a holomorphicity check).
inline Eigen::VectorXcd reconstructed_v(const PeriodData& P, int t, cplx z, Eigen::VectorXcd* dbar = nullptr) {
  const int nf = 2 * P.genus;
  auto L = detail::barycentric(P.mesh->triangles[t], z);
  Eigen::VectorXcd d(nf), db(nf);
  for (int f = 0; f < nf; ++f) {
    cplx G = form_gradient(*P.mesh, P.basis, f, t, L);
    d[f] = 0.5 * std::conj(G);
    db[f] = 0.5 * G;
  }
  if (dbar) *dbar = P.coeff * db;
  return P.coeff * d;
}

namespace detail {

// Chart triangle containing the point at distance r and chart angle Phi from cone k.
inline std::pair<int, cplx> chart_point(const SpinMesh& M, int k, double r, double Phi) {
  const ConeChart& ch = M.charts[k];
  const double four_pi = 4 * std::numbers::pi;
  for (size_t q = 0; q < ch.tris.size(); ++q) {
    int t = ch.tris[q];
    cplx z = ch.apex[q] + std::polar(r, Phi);
    auto L = barycentric(M.triangles[t], z);
    if (std::min({L[0], L[1], L[2]}) < -1e-12) continue;
    double a = chart_angle(ch, static_cast<int>(q), z - ch.apex[q]);
    double dphi = std::remainder(a - Phi, four_pi);
    if (std::abs(dphi) < 1e-6) return {t, z};
  }
  throw HodgeError("no chart triangle found around cone " + std::to_string(k));
}

}  // namespace detail

inline ConeCircle cone_circle(const PeriodData& P, int k) {
  const SpinMesh& M = *P.mesh;
  const ConeChart& ch = M.charts[k];
  const int nf = 2 * P.genus, N = P.options.cauchy_nodes;
  ConeCircle c;
  double rz = P.options.cauchy_radius * ch.radius;
  c.rho = std::sqrt(2 * rz);
  Eigen::MatrixXd pot(N, nf);
  for (int n = 0; n < N; ++n) {
    double alpha = 2 * std::numbers::pi * (n + 0.5) / N;
    auto [t, z] = detail::chart_point(M, k, rz, ch.theta_s + 2 * alpha);
    c.x.push_back(chart_coordinate(M, k, t, z));
    auto L = detail::barycentric(M.triangles[t], z);
    for (int f = 0; f < nf; ++f) pot(n, f) = form_potential(M, P.basis, f, t, L);
  }
  // lifts jump by integers across cut edges; the loop itself is contractible
  for (int n = 1; n < N; ++n)
    for (int f = 0; f < nf; ++f) pot(n, f) -= std::round(pot(n, f) - pot(n - 1, f));
  for (int f = 0; f < nf; ++f)
    if (std::abs(pot(N - 1, f) - pot(0, f)) > 0.25) throw HodgeError("potential does not close around cone " + std::to_string(k));
  c.psi = pot.cast<cplx>() * P.coeff.transpose();
  c.f0 = Eigen::VectorXcd::Zero(P.genus);
  for (int n = 0; n < N; ++n) c.f0 += c.psi.row(n).transpose() / (c.x[n] * double(N));
  return c;
}

inline PeriodData period_matrix(const SpinMesh& M, HarmonicBasis hb, const HodgeOptions& opt = {}) {
  const int g = M.surface.genus;
  PeriodData P;
  P.mesh = &M;
  P.options = opt;
  P.genus = g;
  Eigen::MatrixXd Sbb = hb.gram.block(g, g, g, g), Sba = hb.gram.block(g, 0, g, g);
  Eigen::LLT<Eigen::MatrixXd> llt(Sbb);
  if (llt.info() != Eigen::Success) throw HodgeError("b-class energy matrix is not positive definite");
  Eigen::MatrixXcd rhs = cplx(0, 1) * Eigen::MatrixXcd::Identity(g, g) - Sba.cast<cplx>();
  P.B_matrix = llt.solve(Eigen::MatrixXd::Identity(g, g)).cast<cplx>() * rhs;
  Eigen::MatrixXd imB = 0.5 * (P.B_matrix.imag() + P.B_matrix.imag().transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(imB);
  if (!(es.eigenvalues().minCoeff() > 0)) throw HodgeError("Im B is not positive definite: discretization failed");
  P.symmetry_defect = (P.B_matrix - P.B_matrix.transpose()).norm() / P.B_matrix.norm();
  P.coeff = Eigen::MatrixXcd::Zero(g, 2 * g);
  P.coeff.leftCols(g).setIdentity();
  P.coeff.rightCols(g) = P.B_matrix.transpose();
  P.residual = hb.residual;
  P.basis = std::move(hb);
  for (int k = 0; k < static_cast<int>(M.charts.size()); ++k) P.circles.push_back(cone_circle(P, k));
  return P;
}

inline PeriodData period_matrix(const SpinMesh& M, const HodgeOptions& opt = {}) { return period_matrix(M, harmonic_basis(M), opt); }

// v_i = upsilon_i / omega at z in triangle t. Near a cone, where v ~ f(0)/x,
// f(x0) = psi'(x0) comes from the Cauchy integral over the stored circle.
inline Eigen::VectorXcd pointwise_v(const PeriodData& P, int t, cplx z) {
  const SpinMesh& M = *P.mesh;
  for (int k = 0; k < static_cast<int>(M.charts.size()); ++k) {
    const ConeChart& ch = M.charts[k];
    auto it = ch.index.find(t);
    if (it == ch.index.end()) continue;
    if (std::abs(z - ch.apex[it->second]) >= P.options.exclusion_radius * ch.radius) continue;
    cplx x0 = chart_coordinate(M, k, t, z);
    const ConeCircle& c = P.circles[k];
    Eigen::VectorXcd f = Eigen::VectorXcd::Zero(P.genus);
    const int N = static_cast<int>(c.x.size());
    for (int n = 0; n < N; ++n) f += (c.x[n] / ((c.x[n] - x0) * (c.x[n] - x0)) / double(N)) * c.psi.row(n).transpose();
    if (std::abs(x0) == 0) throw HodgeError("v is singular at the cone itself");
    return f / x0;
  }
  return reconstructed_v(P, t, z);
}

// Abel-map increment along the straight segment z -> z + d starting in triangle t.
// Path dependence is the lattice Z^g + B Z^g; a straight path fixes the lift.
struct AbelStep {
  Eigen::VectorXcd value;
  int tri = -1;
  cplx end;
};

inline AbelStep abel_increment(const PeriodData& P, int t, cplx z, cplx d) {
  const SpinMesh& M = *P.mesh;
  auto steps = walk_segment(M, t, z, d);
  AbelStep out;
  out.value = Eigen::VectorXcd::Zero(P.genus);
  for (const auto& s : steps) {
    const MeshTriangle& T = M.triangles[s.tri];
    out.value += upsilon_potential(P, s.tri, detail::barycentric(T, s.exit)) - upsilon_potential(P, s.tri, detail::barycentric(T, s.entry));
  }
  out.tri = steps.back().tri;
  out.end = steps.back().exit;
  return out;
}

// Periods of the 2g harmonic forms over the straight cycles a_j, b_j (rows: forms).
inline Eigen::MatrixXd cycle_periods(const PeriodData& P) {
  const SpinMesh& M = *P.mesh;
  const int g = P.genus;
  PointLocator loc(M);
  Eigen::MatrixXd R(2 * g, 2 * g);
  for (char which : {'a', 'b'})
    for (int j = 0; j < g; ++j) {
      const Torus& T = M.surface.tori[j];
      cplx dir = which == 'a' ? T.A : T.B;
      cplx p = clear_base_point(M, j, dir, 2 * M.params.h);
      auto [t, z] = loc.locate(j, p);
      auto steps = walk_segment(M, t, z, dir);
      int col = (which == 'a' ? 0 : g) + j;
      for (int f = 0; f < 2 * g; ++f) {
        double s = 0;
        for (const auto& st : steps) {
          const MeshTriangle& tr = M.triangles[st.tri];
          s += form_potential(M, P.basis, f, st.tri, detail::barycentric(tr, st.exit)) -
               form_potential(M, P.basis, f, st.tri, detail::barycentric(tr, st.entry));
        }
        R(f, col) = s;
      }
    }
  return R;
}

// Integral of v_i v_j omega along the straight segment z -> z + d, away from cones.
inline Eigen::MatrixXcd quadratic_segment_integral(const PeriodData& P, int t, cplx z, cplx d) {
  static const GaussLegendre gl(10);
  const int g = P.genus;
  Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(g, g);
  for (const auto& st : walk_segment(*P.mesh, t, z, d)) {
    cplx len = st.exit - st.entry;
    for (int q = 0; q < gl.size(); ++q) {
      cplx p = st.entry + 0.5 * (1 + gl.node(q)) * len;
      Eigen::VectorXcd v = pointwise_v(P, st.tri, p);
      S += (0.5 * gl.weight(q)) * len * (v * v.transpose());
    }
  }
  return S;
}

struct Coordinate {
  char kind = 'A';  // 'A', 'B' or 'C'
  int index = 0;
};

// Contour side of the variation formula: A_i -> -b_i, B_i -> a_i, C_k -> circle |x_k| = eps.
inline Eigen::MatrixXcd dual_cycle_integral(const PeriodData& P, Coordinate nu) {
  const SpinMesh& M = *P.mesh;
  if (nu.kind == 'C') {
    const Eigen::VectorXcd& f0 = P.circles.at(nu.index).f0;
    return cplx(0, 2 * std::numbers::pi) * (f0 * f0.transpose());
  }
  const Torus& T = M.surface.tori.at(nu.index);
  cplx dir = nu.kind == 'A' ? T.B : T.A;
  double sgn = nu.kind == 'A' ? -1.0 : 1.0;
  PointLocator loc(M);
  cplx p = clear_base_point(M, nu.index, dir, 2 * M.params.h);
  auto [t, z] = loc.locate(nu.index, p);
  return sgn * quadratic_segment_integral(P, t, z, dir);
}

inline ModuliPoint shifted(const ModuliPoint& m, Coordinate nu, cplx step) {
  ModuliPoint r = m;
  auto& v = nu.kind == 'A' ? r.A : nu.kind == 'B' ? r.B : r.C;
  v.at(nu.index) += step;
  return r;
}

struct DerivativeCheck {
  Eigen::MatrixXcd dB;       // central-difference d/dnu
  Eigen::MatrixXcd dB_bar;   // central-difference d/dnu-bar
  Eigen::MatrixXcd contour;  // dual-cycle integral
  double relative_error = 0.0;
  double antiholomorphic = 0.0;  // |dB/dnu-bar| relative to |dB/dnu|
  bool unstable = false;         // round-off comparable to the difference itself
};

// Central differences of B on meshes replayed from the base recipe (same
// combinatorics), against the contour integral on the base mesh.
inline DerivativeCheck check_dB_dnu(const SpinMesh& M, Coordinate nu, double step, const HodgeOptions& opt = {}) {
  PeriodData P0 = period_matrix(M, opt);
  auto Bat = [&](cplx s) {
    SpinMesh N = replay_mesh(build_surface(shifted(M.surface.moduli, nu, s)), M.params, M.recipe);
    return period_matrix(N, opt).B_matrix;
  };
  Eigen::MatrixXcd Dx = (Bat(step) - Bat(-step)) / (2 * step);
  Eigen::MatrixXcd Dy = (Bat(cplx(0, step)) - Bat(cplx(0, -step))) / (2 * step);
  DerivativeCheck r;
  r.dB = 0.5 * (Dx - cplx(0, 1) * Dy);
  r.dB_bar = 0.5 * (Dx + cplx(0, 1) * Dy);
  r.contour = dual_cycle_integral(P0, nu);
  double scale = std::max(r.contour.cwiseAbs().maxCoeff(), 1e-300);
  r.relative_error = (r.dB - r.contour).cwiseAbs().maxCoeff() / scale;
  r.antiholomorphic = r.dB_bar.cwiseAbs().maxCoeff() / std::max(r.dB.cwiseAbs().maxCoeff(), 1e-300);
  r.unstable = 1e-14 * P0.B_matrix.norm() / step > 1e-2 * r.dB.cwiseAbs().maxCoeff();
  return r;
}

}  // namespace spinlap
