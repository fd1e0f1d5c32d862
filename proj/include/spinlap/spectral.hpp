// Galerkin discretization of the spinor Laplacian  Delta = -(1/4)(d_x^2 + d_y^2)
// on the sign-lifted mesh, with per-cone singular enrichment selecting the
// self-adjoint extension, plus spectra, heat traces and zeta determinants.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinlap/eigensolver.hpp"
#include "spinlap/homology_spin.hpp"
#include "spinlap/mesh.hpp"
#include "spinlap/quadrature.hpp"
#include "spinlap/special_functions.hpp"

namespace spinlap {

using SparseZ = Eigen::SparseMatrix<cplx>;
using SparseD = Eigen::SparseMatrix<double>;

struct AssemblyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct WindowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RegularizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Extension { Friedrichs, Szego, Holomorphic };

inline std::string extension_name(Extension e) {
  switch (e) {
    case Extension::Friedrichs: return "friedrichs";
    case Extension::Szego: return "szego";
    case Extension::Holomorphic: return "holomorphic";
  }
  return "?";
}

inline Extension parse_extension(const std::string& s) {
  if (s == "friedrichs" || s == "F") return Extension::Friedrichs;
  if (s == "szego" || s == "S") return Extension::Szego;
  if (s == "holomorphic" || s == "h") return Extension::Holomorphic;
  throw std::invalid_argument("unknown extension '" + s + "'");
}

struct ExtensionKind {
  Extension tag = Extension::Friedrichs;

  // model sections admitted at every cone, in the distinguished coordinate
  std::vector<std::string> admitted() const {
    switch (tag) {
      case Extension::Friedrichs: return {"|x|", "x", "x^2", "conj(x)|x|"};
      case Extension::Szego: return {"1", "x", "x^2", "conj(x)|x|"};
      case Extension::Holomorphic: return {"x^-1", "1", "x", "x^2"};
    }
    return {};
  }
  // powers m of the x^m enrichments added per cone
  std::vector<int> enrichment_powers() const {
    switch (tag) {
      case Extension::Friedrichs: return {};
      case Extension::Szego: return {0};
      case Extension::Holomorphic: return {-1, 0};
    }
    return {};
  }
};

// C-infinity radial cutoff: 1 below r1, 0 above r2.
struct Cutoff {
  double r1 = 0, r2 = 0;
  static double f(double x) { return x > 0 ? std::exp(-1.0 / x) : 0.0; }
  static double df(double x) { return x > 0 ? std::exp(-1.0 / x) / (x * x) : 0.0; }
  double value(double r) const {
    if (r <= r1) return 1.0;
    if (r >= r2) return 0.0;
    double s = (r - r1) / (r2 - r1);
    double a = f(1 - s), b = f(s);
    return a / (a + b);
  }
  double derivative(double r) const {
    if (r <= r1 || r >= r2) return 0.0;
    double s = (r - r1) / (r2 - r1);
    double a = f(1 - s), b = f(s), da = -df(1 - s), db = df(s);
    return (da * (a + b) - a * (da + db)) / ((a + b) * (a + b)) / (r2 - r1);
  }
};

struct EnrichmentFunction {
  int cone = -1;
  int m = 0;  // x-representative x^m, z-representative x^{m - 1/2}
  Cutoff cutoff;
  int dof = -1;
};

struct AssemblyOptions {
  double cutoff_inner = 0.1;  // fractions of the chart radius
  double cutoff_outer = 0.95;
  int quad_points = 10;       // collapsed Gauss rule per direction in chart triangles
};

struct DiscreteOperator {
  ExtensionKind extension;
  SparseZ stiffness, mass;
  bool real_valued = true;
  int num_p2 = 0;
  std::vector<EnrichmentFunction> enrichment;
  double enrichment_condition = 1.0;  // smallest eigenvalue of the normalized enrichment mass block residual

  int size() const { return static_cast<int>(mass.rows()); }
};

namespace detail {

struct P2Element {
  std::array<cplx, 3> z;
  std::array<cplx, 3> g;  // gradients of the barycentric coordinates as gx + i gy
  double area;
  explicit P2Element(const MeshTriangle& T) : z(T.z) {
    area = T.area();
    for (int i = 0; i < 3; ++i) g[i] = cplx(0, 1) * (z[(i + 2) % 3] - z[(i + 1) % 3]) / (2 * area);
  }
  cplx point(const std::array<double, 3>& L) const { return L[0] * z[0] + L[1] * z[1] + L[2] * z[2]; }
  static void values(const std::array<double, 3>& L, double* phi) {
    for (int k = 0; k < 3; ++k) phi[k] = L[k] * (2 * L[k] - 1);
    for (int i = 0; i < 3; ++i) phi[3 + i] = 4 * L[i] * L[(i + 1) % 3];
  }
  void gradients(const std::array<double, 3>& L, cplx* G) const {
    for (int k = 0; k < 3; ++k) G[k] = (4 * L[k] - 1) * g[k];
    for (int i = 0; i < 3; ++i) {
      int j = (i + 1) % 3;
      G[3 + i] = 4.0 * (L[j] * g[i] + L[i] * g[j]);
    }
  }
};

// z^{p} written through the chart angle: (2 r)^{p/2} e^{i p Phi / 2} is x^{p}
inline cplx x_power(double r, double Phi, double p) { return std::polar(std::pow(2 * r, 0.5 * p), 0.5 * p * Phi); }

inline double chart_angle(const ConeChart& ch, int q, cplx w) {
  double base = ch.phi[q];
  return std::abs(w) > 0 ? base + wrap_pi(std::arg(w) - base) : base;
}

// radial integral of g over [a, b] by composite Gauss-Legendre
template <class F>
double radial_integral(double a, double b, F&& g, int panels = 16, int order = 16) {
  static const GaussLegendre gl(16);
  double s = 0, h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    double lo = a + p * h;
    for (int i = 0; i < order; ++i) s += 0.5 * h * gl.weight(i) * g(lo + 0.5 * h * (1 + gl.node(i)));
  }
  return s;
}

inline int cone_corner(const SpinMesh& M, int t, int vertex) {
  for (int a = 0; a < 3; ++a)
    if (M.triangles[t].v[a] == vertex) return a;
  return -1;
}

}  // namespace detail

inline std::vector<EnrichmentFunction> make_enrichment(const SpinMesh& M, const ExtensionKind& ext, int first_dof,
                                                       const AssemblyOptions& o) {
  std::vector<EnrichmentFunction> out;
  int dof = first_dof;
  for (size_t k = 0; k < M.charts.size(); ++k)
    for (int m : ext.enrichment_powers()) {
      EnrichmentFunction e;
      e.cone = static_cast<int>(k);
      e.m = m;
      e.cutoff = {o.cutoff_inner * M.charts[k].radius, o.cutoff_outer * M.charts[k].radius};
      if (!(e.cutoff.r1 > 0 && e.cutoff.r2 > e.cutoff.r1 && e.cutoff.r2 < M.charts[k].radius))
        throw AssemblyError("cutoff radii must satisfy 0 < r1 < r2 < chart radius");
      if (e.cutoff.r1 < 4 * M.h_min) throw AssemblyError("cutoff too small for the mesh near the cone");
      e.dof = dof++;
      out.push_back(e);
    }
  return out;
}

// Value of enrichment e at z in chart triangle t (frame of t); zero outside the chart.
inline cplx enrichment_value(const SpinMesh& M, const SignLift& L, const EnrichmentFunction& e, int t, cplx z, cplx* dbar = nullptr) {
  const ConeChart& ch = M.charts[e.cone];
  auto it = ch.index.find(t);
  if (dbar) *dbar = 0;
  if (it == ch.index.end()) return 0;
  int q = it->second;
  cplx w = z - ch.apex[q];
  double r = std::abs(w);
  if (r >= e.cutoff.r2 || r == 0) return 0;
  double Phi = detail::chart_angle(ch, q, w);
  double eps = L.chart_sign[e.cone][q];
  cplx xp = detail::x_power(r, Phi, e.m - 0.5);
  if (dbar) *dbar = eps * 0.5 * e.cutoff.derivative(r) * (w / r) * xp;
  return eps * e.cutoff.value(r) * xp;
}

inline DiscreteOperator assemble_operator(const SpinMesh& M, const SignLift& L, ExtensionKind ext, const AssemblyOptions& o = {}) {
  DiscreteOperator op;
  op.extension = ext;
  const DofMap& D = L.dofs;
  op.num_p2 = D.num_dofs;
  op.enrichment = make_enrichment(M, ext, D.num_dofs, o);
  const int n = D.num_dofs + static_cast<int>(op.enrichment.size());
  op.real_valued = op.enrichment.empty();
  std::vector<Eigen::Triplet<cplx>> tk, tm;
  tk.reserve(36 * M.num_triangles());
  tm.reserve(36 * M.num_triangles());
  const auto& rule = triangle_rule_deg4();
  for (int t = 0; t < M.num_triangles(); ++t) {
    detail::P2Element E(M.triangles[t]);
    double k[6][6] = {}, m[6][6] = {};
    for (const auto& qp : rule) {
      std::array<double, 3> Lb{1 - qp.xi - qp.eta, qp.xi, qp.eta};
      double phi[6];
      cplx G[6];
      detail::P2Element::values(Lb, phi);
      E.gradients(Lb, G);
      double w = qp.w * 2 * E.area;
      for (int a = 0; a < 6; ++a)
        for (int b = a; b < 6; ++b) {
          k[a][b] += 0.25 * w * (std::conj(G[a]) * G[b]).real();
          m[a][b] += w * phi[a] * phi[b];
        }
    }
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < a; ++b) {
        k[a][b] = k[b][a];
        m[a][b] = m[b][a];
      }
    for (int a = 0; a < 6; ++a) {
      int da = D.dof[t][a];
      if (da < 0) continue;
      for (int b = 0; b < 6; ++b) {
        int db = D.dof[t][b];
        if (db < 0) continue;
        double s = D.sign[t][a] * D.sign[t][b];
        tk.emplace_back(da, db, s * k[a][b]);
        tm.emplace_back(da, db, s * m[a][b]);
      }
    }
  }
  if (!op.enrichment.empty()) {
    auto rule_c = collapsed_triangle_rule(o.quad_points);
    for (const auto& e : op.enrichment) {
      const ConeChart& ch = M.charts[e.cone];
      for (size_t q = 0; q < ch.tris.size(); ++q) {
        int t = ch.tris[q];
        if (detail::point_triangle_distance(ch.apex[q], M.triangles[t].z) >= e.cutoff.r2) continue;
        detail::P2Element E(M.triangles[t]);
        int c = std::max(0, detail::cone_corner(M, t, ch.vertex));
        cplx kc[6] = {}, mc[6] = {};
        for (const auto& qp : rule_c) {
          std::array<double, 3> Lb;
          Lb[c] = 1 - qp.xi - qp.eta;
          Lb[(c + 1) % 3] = qp.xi;
          Lb[(c + 2) % 3] = qp.eta;
          cplx z = E.point(Lb);
          cplx de;
          cplx ev = enrichment_value(M, L, e, t, z, &de);
          if (ev == cplx(0) && de == cplx(0)) continue;
          double phi[6];
          cplx G[6];
          detail::P2Element::values(Lb, phi);
          E.gradients(Lb, G);
          double w = qp.w * 2 * E.area;
          for (int a = 0; a < 6; ++a) {
            mc[a] += w * phi[a] * ev;
            kc[a] += w * de * 0.5 * std::conj(G[a]);
          }
        }
        for (int a = 0; a < 6; ++a) {
          int da = D.dof[t][a];
          if (da < 0) continue;
          double s = D.sign[t][a];
          tk.emplace_back(da, e.dof, s * kc[a]);
          tk.emplace_back(e.dof, da, s * std::conj(kc[a]));
          tm.emplace_back(da, e.dof, s * mc[a]);
          tm.emplace_back(e.dof, da, s * std::conj(mc[a]));
        }
      }
      // radial closed forms on the 4 pi disk; distinct powers are orthogonal in angle
      double p = e.m - 0.5;
      double r1 = e.cutoff.r1, r2 = e.cutoff.r2;
      double mass_in = 4 * std::numbers::pi * std::pow(2.0, p) * std::pow(r1, p + 2) / (p + 2);
      double mass_out = 4 * std::numbers::pi *
                        detail::radial_integral(r1, r2, [&](double r) { double c = e.cutoff.value(r); return c * c * std::pow(2 * r, p) * r; });
      double stiff = std::numbers::pi *
                     detail::radial_integral(r1, r2, [&](double r) { double c = e.cutoff.derivative(r); return c * c * std::pow(2 * r, p) * r; });
      tm.emplace_back(e.dof, e.dof, mass_in + mass_out);
      tk.emplace_back(e.dof, e.dof, stiff);
    }
  }
  op.stiffness.resize(n, n);
  op.mass.resize(n, n);
  op.stiffness.setFromTriplets(tk.begin(), tk.end());
  op.mass.setFromTriplets(tm.begin(), tm.end());
  op.stiffness.makeCompressed();
  op.mass.makeCompressed();
  if (!op.enrichment.empty()) {
    // conditioning of the enrichment against the P2 space: relative L2 distance
    SparseZ Mpp = op.mass.topLeftCorner(op.num_p2, op.num_p2);
    Eigen::SimplicialLDLT<SparseZ> F(Mpp);
    int ne = static_cast<int>(op.enrichment.size());
    Eigen::MatrixXcd B = Eigen::MatrixXcd(op.mass.block(0, op.num_p2, op.num_p2, ne));
    Eigen::MatrixXcd Mee = Eigen::MatrixXcd(op.mass.bottomRightCorner(ne, ne));
    Eigen::MatrixXcd Sc = Mee - B.adjoint() * F.solve(B);
    Eigen::VectorXd d = Mee.diagonal().real();
    for (int i = 0; i < ne; ++i)
      for (int j = 0; j < ne; ++j) Sc(i, j) /= std::sqrt(d[i] * d[j]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Sc);
    op.enrichment_condition = es.eigenvalues()[0];
    if (!(op.enrichment_condition > 1e-13)) throw AssemblyError("enrichment Gram matrix is numerically singular; enlarge the cutoff");
  }
  return op;
}

inline double hermiticity_defect(const SparseZ& A) {
  SparseZ D = A - SparseZ(A.adjoint());
  return D.norm();
}

// ---------------------------------------------------------------- spectra

struct SpectrumResult {
  Extension extension = Extension::Friedrichs;
  double h = 0;
  Eigen::VectorXd eigenvalues;
  Eigen::VectorXd residuals;
  Eigen::MatrixXcd vectors;  // empty unless requested
};

inline SpectrumResult compute_spectrum(const DiscreteOperator& op, int N, bool want_vectors = false, EigOptions eo = {},
                                       double lower = -1e-8) {
  SpectrumResult r;
  r.extension = op.extension.tag;
  if (N >= op.size()) throw EigensolverError("requested eigenvalue count exceeds the discrete dimension");
  if (op.real_valued) {
    SparseD K = op.stiffness.real(), M = op.mass.real();
    GeneralizedEigensolver<double> es(K, M, eo);
    auto res = es.lowest(N, lower, want_vectors);
    r.eigenvalues = res.values;
    r.residuals = res.residuals;
    if (want_vectors) r.vectors = res.vectors.cast<cplx>();
  } else {
    GeneralizedEigensolver<cplx> es(op.stiffness, op.mass, eo);
    auto res = es.lowest(N, lower, want_vectors);
    r.eigenvalues = res.values;
    r.residuals = res.residuals;
    if (want_vectors) r.vectors = res.vectors;
  }
  return r;
}

// Value of a discrete section (coefficients c) at z in triangle t, in the frame of t.
inline cplx evaluate_section(const SpinMesh& M, const SignLift& L, const DiscreteOperator& op, const Eigen::VectorXcd& c, int t,
                             cplx z) {
  const auto& T = M.triangles[t];
  double A = T.area();
  auto cross = [](cplx a, cplx b) { return (std::conj(a) * b).imag(); };
  std::array<double, 3> Lb;
  for (int i = 0; i < 3; ++i) Lb[i] = cross(T.z[(i + 2) % 3] - T.z[(i + 1) % 3], z - T.z[(i + 1) % 3]) / (2 * A);
  double phi[6];
  detail::P2Element::values(Lb, phi);
  cplx u = 0;
  for (int a = 0; a < 6; ++a)
    if (L.dofs.dof[t][a] >= 0) u += double(L.dofs.sign[t][a]) * phi[a] * c[L.dofs.dof[t][a]];
  for (const auto& e : op.enrichment) u += c[e.dof] * enrichment_value(M, L, e, t, z);
  return u;
}

// ---------------------------------------------------------------- heat trace and zeta

// Eigenvalue sum, optionally completed beyond the last computed eigenvalue by the Weyl density area/pi.
inline double heat_trace(const Eigen::VectorXd& ev, double t, bool weyl_completion, double area) {
  double s = 0;
  for (int i = 0; i < ev.size(); ++i) s += std::exp(-ev[i] * t);
  if (weyl_completion && ev.size() > 0) {
    double lstar = ev[ev.size() - 1] + 0.5 * std::numbers::pi / area;
    s += area / (std::numbers::pi * t) * std::exp(-lstar * t);
  }
  return s;
}

// smallest t at which the truncated sum plus Weyl tail is trusted: the tail stays below `tail_fraction` of K
inline double heat_window_start(const Eigen::VectorXd& ev, double area, double tail_fraction = 2e-3) {
  double lN = ev[ev.size() - 1];
  double lo = 1e-6, hi = 10.0;
  for (int it = 0; it < 100; ++it) {
    double t = std::sqrt(lo * hi);
    double tail = std::exp(-lN * t);  // tail / (area/(pi t))
    (tail > tail_fraction ? lo : hi) = t;
  }
  return hi;
}

// Fit window for the heat constant: starts where exp(-lambda_N t) is negligible and spans a factor 3.
inline std::pair<double, double> default_heat_window(const Eigen::VectorXd& ev, double area, double exponent = 12.0) {
  double lo = std::max(exponent / ev[ev.size() - 1], heat_window_start(ev, area));
  return {lo, 3 * lo};
}

struct HeatConstantFit {
  double c0 = 0;         // constant with the area term fixed at the flat area
  double c0_joint = 0;   // constant from a joint fit of {1/t, 1}
  double area_fit = 0;   // area from the joint fit
  double t_lo = 0, t_hi = 0;
  double spread = 0;     // max deviation of K - area/(pi t) from c0 over the window
};

inline HeatConstantFit fit_heat_constant(const Eigen::VectorXd& ev, double area, double t_lo, double t_hi, int samples = 41) {
  double tmin = heat_window_start(ev, area);
  if (t_lo < tmin * (1 - 1e-12))
    throw WindowError("heat-trace window starts at t=" + std::to_string(t_lo) + " below the validity bound " + std::to_string(tmin));
  HeatConstantFit f;
  f.t_lo = t_lo;
  f.t_hi = t_hi;
  Eigen::MatrixXd A(samples, 2);
  Eigen::VectorXd y(samples), r(samples);
  for (int i = 0; i < samples; ++i) {
    double t = t_lo * std::pow(t_hi / t_lo, double(i) / (samples - 1));
    double K = heat_trace(ev, t, true, area);
    A(i, 0) = 1.0 / (std::numbers::pi * t);
    A(i, 1) = 1.0;
    y[i] = K;
    r[i] = K - area / (std::numbers::pi * t);
  }
  f.c0 = r.mean();
  f.spread = (r.array() - f.c0).abs().maxCoeff();
  Eigen::Vector2d x = A.colPivHouseholderQr().solve(y);
  f.area_fit = x[0];
  f.c0_joint = x[1];
  return f;
}

struct ZetaOptions {
  double tail_exponent = 12.0;      // t0 >= tail_exponent / lambda_N
  double overlap_tolerance = 5e-3;  // |K_N - model| / K at the split point
  std::vector<double> t0_factors{1.0, 1.5, 2.0, 3.0};
};

struct ZetaDeterminant {
  double log_det = 0;  // -zeta'(0)
  double err = 0;      // spread over split points and spectral truncation
  double zeta0 = 0;    // zeta(0) = c0 for a positive spectrum
  double t0 = 0;
  double overlap = 0;  // relative mismatch of the eigenvalue sum and the model at t0
  std::vector<double> t0_used, log_det_by_t0;
};

// zeta'(0) for  K(t) = A/(pi t) + c0  on (0, t0) and the eigenvalue sum beyond:
//   zeta'(0) = -A/(pi t0) + c0 (log t0 + gamma) + sum_n E1(lambda_n t0) + Weyl tail.
inline double zeta_prime_split(const Eigen::VectorXd& ev, double area, double c0, double t0) {
  const double pi = std::numbers::pi;
  double zp = -area / (pi * t0) + c0 * (std::log(t0) + std::numbers::egamma);
  for (int i = 0; i < ev.size(); ++i) zp += expint_e1(ev[i] * t0);
  // (A/pi) int_{l*}^inf E1(l t0) dl = (A/(pi t0)) (e^{-x} - x E1(x)),  x = l* t0
  double x = (ev[ev.size() - 1] + 0.5 * pi / area) * t0;
  zp += area / (pi * t0) * (std::exp(-x) - x * expint_e1(x));
  return zp;
}

inline ZetaDeterminant zeta_determinant(const Eigen::VectorXd& ev, double area, double c0, const ZetaOptions& o = {}) {
  if (ev.size() < 8) throw RegularizationError("too few eigenvalues for the zeta determinant");
  if (ev[0] <= 0) throw RegularizationError("zeta determinant needs a positive spectrum");
  ZetaDeterminant z;
  z.zeta0 = c0;
  const double pi = std::numbers::pi;
  z.t0 = std::max(o.tail_exponent / ev[ev.size() - 1], heat_window_start(ev, area));
  double K = heat_trace(ev, z.t0, true, area);
  z.overlap = std::abs(K - area / (pi * z.t0) - c0) / K;
  if (z.overlap > o.overlap_tolerance)
    throw RegularizationError("eigenvalue sum and small-t model disagree by " + std::to_string(z.overlap) + " at t0=" + std::to_string(z.t0));
  for (double f : o.t0_factors) {
    double t0 = f * z.t0;
    z.t0_used.push_back(t0);
    z.log_det_by_t0.push_back(-zeta_prime_split(ev, area, c0, t0));
  }
  z.log_det = z.log_det_by_t0.front();
  double spread = 0;
  for (double v : z.log_det_by_t0) spread = std::max(spread, std::abs(v - z.log_det));
  // truncation: the top fifth of the spectrum removed, split point moved accordingly
  int nh = std::max<int>(8, static_cast<int>(ev.size()) * 4 / 5);
  Eigen::VectorXd head = ev.head(nh);
  double t0h = std::max(o.tail_exponent / head[nh - 1], z.t0);
  double trunc = std::abs(-zeta_prime_split(head, area, c0, t0h) - z.log_det);
  z.err = std::max(spread, trunc);
  return z;
}

// ---------------------------------------------------------------- cone coefficients

struct ConeCoefficients {
  int cone = -1;
  // index m + 1 for m = -1..2
  std::array<cplx, 4> plus{}, minus{};
  double fit_residual = 0;  // relative RMS residual of the fit
  double rho_lo = 0, rho_hi = 0;
  int samples = 0;
  // size of each model term at the outer fit radius: |c| * |f|(rho_hi)
  double size_plus(int m) const { return std::abs(plus[m + 1]) * std::pow(rho_hi, m); }
  double size_minus(int m) const {
    return std::abs(minus[m + 1]) * std::pow(rho_hi, 1 - m) / (std::numbers::pi * std::abs(m - 0.5));
  }
};

// Darboux model sections in the distinguished coordinate
inline cplx model_plus(int m, cplx x) { return std::pow(x, m); }
inline cplx model_minus(int m, cplx x) {
  double rho = std::abs(x);
  return std::pow(rho, 1 - m) * std::polar(1.0, m * std::arg(x)) / (std::numbers::pi * (m - 0.5));
}

struct CoefficientFitOptions {
  double r_outer = 0;   // in z units; 0 selects half the inner cutoff radius (or 0.15 R)
  double ratio = 25.0;  // r_outer / r_inner
  int extra_orders = 2; // additional model orders m = 3.. and m = -2.. absorbed into the fit
};

// Least-squares fit of the x-representative  u(z) x^{1/2}  near cone k against the Darboux model sections.
template <class SectionEval>
ConeCoefficients fit_cone_coefficients(const SpinMesh& M, const SignLift& L, int k, SectionEval&& eval, CoefficientFitOptions o = {}) {
  const ConeChart& ch = M.charts.at(k);
  double ro = o.r_outer > 0 ? o.r_outer : 0.15 * ch.radius;
  double ri = ro / o.ratio;
  ConeCoefficients out;
  out.cone = k;
  out.rho_lo = std::sqrt(2 * ri);
  out.rho_hi = std::sqrt(2 * ro);
  std::vector<cplx> xs, fs;
  auto rule = collapsed_triangle_rule(3);
  for (size_t q = 0; q < ch.tris.size(); ++q) {
    int t = ch.tris[q];
    const auto& T = M.triangles[t];
    if (detail::point_triangle_distance(ch.apex[q], T.z) > ro) continue;
    for (const auto& qp : rule) {
      cplx z = (1 - qp.xi - qp.eta) * T.z[0] + qp.xi * T.z[1] + qp.eta * T.z[2];
      cplx w = z - ch.apex[q];
      double r = std::abs(w);
      if (r < ri || r > ro) continue;
      double Phi = detail::chart_angle(ch, static_cast<int>(q), w);
      cplx x = std::polar(std::sqrt(2 * r), 0.5 * Phi);
      cplx u = double(L.chart_sign[k][q]) * eval(t, z);
      xs.push_back(x);
      fs.push_back(u * std::polar(std::pow(2 * r, 0.25), 0.25 * Phi));
    }
  }
  // columns: 4 plus, 4 minus, then extra orders (plus m=3.., minus m=-2..)
  int nc = 8 + 2 * o.extra_orders;
  int ns = static_cast<int>(xs.size());
  if (ns < 4 * nc) throw std::runtime_error("too few samples for the cone coefficient fit; widen the annulus");
  Eigen::MatrixXcd A(ns, nc);
  Eigen::VectorXcd b(ns);
  Eigen::VectorXd scale(nc);
  for (int i = 0; i < ns; ++i) {
    int c = 0;
    for (int m = -1; m <= 2; ++m) A(i, c++) = model_plus(m, xs[i]);
    for (int m = -1; m <= 2; ++m) A(i, c++) = model_minus(m, xs[i]);
    for (int e = 0; e < o.extra_orders; ++e) {
      A(i, c++) = model_plus(3 + e, xs[i]);
      A(i, c++) = model_minus(-2 - e, xs[i]);
    }
    b[i] = fs[i];
  }
  for (int c = 0; c < nc; ++c) {
    scale[c] = A.col(c).norm();
    A.col(c) /= scale[c];
  }
  Eigen::VectorXcd sol = A.colPivHouseholderQr().solve(b);
  Eigen::VectorXcd res = A * sol - b;
  out.fit_residual = res.norm() / std::max(b.norm(), 1e-300);
  for (int c = 0; c < nc; ++c) sol[c] /= scale[c];
  for (int m = 0; m < 4; ++m) {
    out.plus[m] = sol[m];
    out.minus[m] = sol[4 + m];
  }
  out.samples = ns;
  return out;
}

inline ConeCoefficients extract_singular_coefficients(const SpinMesh& M, const SignLift& L, const DiscreteOperator& op,
                                                      const Eigen::VectorXcd& u, int k, CoefficientFitOptions o = {}) {
  if (o.r_outer <= 0) {
    double r1 = 0;
    for (const auto& e : op.enrichment)
      if (e.cone == k) r1 = e.cutoff.r1;
    o.r_outer = r1 > 0 ? std::min(0.5 * r1, 0.15 * M.charts[k].radius) : 0.15 * M.charts[k].radius;
  }
  return fit_cone_coefficients(M, L, k, [&](int t, cplx z) { return evaluate_section(M, L, op, u, t, z); }, o);
}

}  // namespace spinlap
