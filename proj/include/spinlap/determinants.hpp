// T(0) by surface quadrature, the F/S determinant comparison and the spin-independence check.
#pragma once

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "spinlap/cone_analysis.hpp"
#include "spinlap/special_functions.hpp"
#include "spinlap/spectral.hpp"
#include "spinlap/szego.hpp"

namespace spinlap {

struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline int worker_threads() {
  if (const char* s = std::getenv("SPINLAP_THREADS")) {
    int n = std::atoi(s);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs f(begin, end, slot) over contiguous chunks of [0, n).
inline void parallel_chunks(int n, int threads, const std::function<void(int, int, int)>& f) {
  threads = std::max(1, std::min(threads, n));
  std::vector<std::thread> pool;
  for (int s = 0; s < threads; ++s) {
    int b = static_cast<int>(static_cast<long>(n) * s / threads), e = static_cast<int>(static_cast<long>(n) * (s + 1) / threads);
    pool.emplace_back(f, b, e, s);
  }
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------- T(0)

struct T0Options {
  double r1 = 0.10, r2 = 0.25;          // cutoff radii around the cones, fractions of the chart radius
  double alt_r1 = 0.06, alt_r2 = 0.17;  // second cutoff; the spread is the error estimate
  double sample_radius = 0.32;          // |z| of the Taylor sampling circle, inside the stored Abel circle
  int circle_nodes = 64;
  int subdivision = 3;  // refinement levels for triangles meeting the cutoff annulus
  int radial_points = 40;
  int threads = 0;  // 0: SPINLAP_THREADS or the hardware count
};

struct ScatteringData {
  ThetaChar characteristic;
  Eigen::MatrixXcd T0;                // (1/pi^2) int S(P_i, z) conj S(P_j, z) dS
  Eigen::MatrixXd quadrature_error;   // per entry
  cplx detT0;
  Eigen::MatrixXcd S_gram;            // pi^2 T0
  double hermiticity_defect = 0;      // max |T0 - T0^*|
  double min_eigenvalue = 0;          // of S_gram
  Eigen::VectorXd diag_direct;        // S_gram_kk with pointwise polar quadrature in the cone disks
  Eigen::VectorXd residue_defect;     // | |lim x S(P_k, x)| - 1 | from the Taylor data
  double seconds = 0;
};

namespace detail {

// Bulk part int (1 - chi) S_i conj S_j over the mesh; chi from the chart distance.
inline Eigen::MatrixXcd t0_bulk(const SzegoKernel& S, double r1, double r2, int levels, int threads) {
  const PeriodData& P = *S.surface().periods;
  const SpinMesh& M = *P.mesh;
  const int n = S.num_cones();
  const auto& rule = triangle_rule_deg4();
  // subdivided reference rule
  std::vector<TrianglePoint> fine;
  {
    int m = 1 << levels;
    double s = 1.0 / m;
    for (int a = 0; a < m; ++a)
      for (int b = 0; a + b < m; ++b)
        for (int up = 0; up < 2; ++up) {
          if (up && a + b + 1 >= m) continue;
          std::array<double, 2> o{a * s, b * s}, e1{s, 0}, e2{0, s};
          if (up) o = {(a + 1) * s, (b + 1) * s}, e1 = {-s, 0}, e2 = {0, -s};
          for (const auto& q : rule) fine.push_back({o[0] + q.xi * e1[0] + q.eta * e2[0], o[1] + q.xi * e1[1] + q.eta * e2[1], q.w * s * s});
        }
  }
  if (threads <= 0) threads = worker_threads();
  // fixed blocks summed in order: the result does not depend on the thread count
  const int nt = M.num_triangles(), blocks = std::min(nt, 64);
  std::vector<Eigen::MatrixXcd> part(blocks, Eigen::MatrixXcd::Zero(n, n));
  parallel_chunks(blocks, threads, [&](int b0, int b1, int) {
    Eigen::VectorXcd s(n);
    for (int blk = b0; blk < b1; ++blk)
    for (int t = static_cast<int>(static_cast<long>(nt) * blk / blocks); t < static_cast<int>(static_cast<long>(nt) * (blk + 1) / blocks); ++t) {
      const MeshTriangle& T = M.triangles[t];
      // distance to the nearest cone apex in this triangle's chart
      int cone = -1;
      cplx apex;
      for (int k = 0; k < n; ++k) {
        auto it = M.charts[k].index.find(t);
        if (it != M.charts[k].index.end()) cone = k, apex = M.charts[k].apex[it->second];
      }
      double R = cone >= 0 ? M.charts[cone].radius : 0;
      double rmin = cone >= 0 ? point_triangle_distance(apex, T.z) : 1e300, rmax = 0;
      for (cplx v : T.z) rmax = std::max(rmax, std::abs(v - apex));
      if (cone >= 0 && rmax <= r1 * R) continue;
      const bool cut = cone >= 0 && rmin < r2 * R;
      const auto& pts = cut ? fine : rule;
      Cutoff chi{r1 * R, r2 * R};
      double jac = 2 * T.area();
      for (const auto& q : pts) {
        std::array<double, 3> L{1 - q.xi - q.eta, q.xi, q.eta};
        cplx z = L[0] * T.z[0] + L[1] * T.z[1] + L[2] * T.z[2];
        double w = q.w * jac * (cut ? 1.0 - chi.value(std::abs(z - apex)) : 1.0);
        if (w == 0) continue;
        s = S.at_point(upsilon_potential(P, t, L), pointwise_v(P, t, z));
        part[blk] += w * s * s.adjoint();
      }
    }
  });
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& p : part) out += p;
  return out;
}

struct ConeTaylor {
  std::vector<Eigen::VectorXcd> coeff;  // coeff[i][m]: x^{delta_ik} S_x(P_i, x) = sum_m coeff x^m
  double rho = 0;                       // radius of the sampling circle in x
};

inline ConeTaylor cone_taylor(const SzegoKernel& S, int k, const T0Options& o) {
  const PeriodData& P = *S.surface().periods;
  const ConeChart& ch = P.mesh->charts[k];
  const ConeCircle& c = P.circles[k];
  const int n = S.num_cones(), N = o.circle_nodes;
  ConeTaylor out;
  out.rho = std::sqrt(2 * o.sample_radius * ch.radius);
  if (out.rho >= 0.9 * c.rho) throw QuadratureError("Taylor circle too close to the Abel sample circle");
  Eigen::MatrixXcd G(n, N);
  std::vector<cplx> xs(N);
  Eigen::VectorXcd psi, f;
  cplx h = 0, h_first = 0;
  for (int m = 0; m < N; ++m) {
    cplx x = std::polar(out.rho, 2 * std::numbers::pi * (m + 0.5) / N);
    xs[m] = x;
    circle_eval(c, x, psi, f);
    cplx h2 = S.h_squared(f);
    h = m == 0 ? std::sqrt(h2) : detail::sqrt_near(h2, h);
    if (m == 0) h_first = h;
    for (int i = 0; i < n; ++i) G(i, m) = S.from_cone(i, psi, h) * (i == k ? x : cplx(1));
  }
  // h continued once around must come back (h_delta^2 has even winding inside the disk)
  if (std::abs(detail::sqrt_near(h_first * h_first, h) - h_first) > 1e-6 * std::abs(h_first))
    throw QuadratureError("h_delta changes sign around cone " + std::to_string(k));
  const int terms = N / 2;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXcd a(terms);
    for (int j = 0; j < terms; ++j) {
      cplx s = 0;
      for (int m = 0; m < N; ++m) s += G(i, m) * std::pow(xs[m], -j);
      a[j] = s / double(N);
    }
    out.coeff.push_back(std::move(a));
  }
  return out;
}

// int_0^{rho2} chi(rho^2/2) rho^p d rho with chi = 1 below rho1
inline double radial_moment(const Cutoff& chi, double p, int npts) {
  double rho1 = std::sqrt(2 * chi.r1), rho2 = std::sqrt(2 * chi.r2);
  double s = std::pow(rho1, p + 1) / (p + 1);
  GaussLegendre gl(npts);
  s += gl.integrate([&](double r) { return chi.value(0.5 * r * r) * std::pow(r, p); }, rho1, rho2);
  return s;
}

inline Eigen::MatrixXcd t0_disks(const SzegoKernel& S, double r1, double r2, const T0Options& o, Eigen::VectorXd* residue = nullptr,
                                 Eigen::VectorXd* direct = nullptr) {
  const PeriodData& P = *S.surface().periods;
  const int n = S.num_cones();
  Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(n, n);
  if (residue) residue->resize(n);
  if (direct) direct->setZero(n);
  for (int k = 0; k < n; ++k) {
    double R = P.mesh->charts[k].radius;
    Cutoff chi{r1 * R, r2 * R};
    if (std::sqrt(2 * chi.r2) >= 0.95 * std::sqrt(2 * o.sample_radius * R)) throw QuadratureError("cutoff disk reaches the Taylor circle");
    ConeTaylor tc = cone_taylor(S, k, o);
    const int terms = static_cast<int>(tc.coeff[0].size());
    if (residue) (*residue)[k] = std::abs(std::abs(tc.coeff[k][0]) - 1.0);
    // angular orthogonality: exponents e = m - delta_ik pair with equal e
    for (int e = -1; e < terms - 1; ++e) {
      double I = 2 * std::numbers::pi * radial_moment(chi, 2 * e + 2, o.radial_points);
      for (int i = 0; i < n; ++i) {
        int mi = e + (i == k);
        if (mi < 0 || mi >= terms) continue;
        for (int j = 0; j < n; ++j) {
          int mj = e + (j == k);
          if (mj < 0 || mj >= terms) continue;
          D(i, j) += I * tc.coeff[i][mi] * std::conj(tc.coeff[j][mj]);
        }
      }
    }
    if (direct) {
      // pointwise polar rule: |S_x|^2 |x| rho = |x^{delta_ik} S_x|^2 rho^{2 - 2 delta_ik} is smooth
      GaussLegendre gl(o.radial_points);
      double rho2 = std::sqrt(2 * chi.r2);
      const int Na = o.circle_nodes;
      Eigen::VectorXcd psi, f;
      for (int a = 0; a < gl.size(); ++a) {
        double rho = 0.5 * rho2 * (1 + gl.node(a)), wr = 0.5 * rho2 * gl.weight(a);
        double c = chi.value(0.5 * rho * rho);
        if (c == 0) continue;
        for (int b = 0; b < Na; ++b) {
          cplx x = std::polar(rho, 2 * std::numbers::pi * (b + 0.5) / Na);
          circle_eval(P.circles[k], x, psi, f);
          cplx h = std::sqrt(S.h_squared(f));
          for (int i = 0; i < n; ++i) {
            double G2 = std::norm(S.from_cone(i, psi, h) * (i == k ? x : cplx(1)));
            (*direct)[i] += wr * (2 * std::numbers::pi / Na) * c * G2 * (i == k ? 1.0 : rho * rho);
          }
        }
      }
    }
  }
  return D;
}

}  // namespace detail

inline ScatteringData t_matrix_zero(const SzegoKernel& S, const T0Options& o = {}) {
  auto start = std::chrono::steady_clock::now();
  const int n = S.num_cones();
  ScatteringData d;
  d.characteristic = S.characteristic();
  const double pi2 = std::numbers::pi * std::numbers::pi;
  if (n == 0) {
    d.T0.resize(0, 0);
    d.quadrature_error.resize(0, 0);
    d.S_gram.resize(0, 0);
    d.detT0 = 1.0;
    d.min_eigenvalue = std::numeric_limits<double>::infinity();
    return d;
  }
  Eigen::VectorXd res, direct;
  Eigen::MatrixXcd bulk = detail::t0_bulk(S, o.r1, o.r2, o.subdivision, o.threads);
  Eigen::MatrixXcd G = bulk + detail::t0_disks(S, o.r1, o.r2, o, &res, &direct);
  Eigen::MatrixXcd G2 = detail::t0_bulk(S, o.alt_r1, o.alt_r2, o.subdivision, o.threads) + detail::t0_disks(S, o.alt_r1, o.alt_r2, o);
  d.S_gram = G;
  d.T0 = G / pi2;
  d.quadrature_error = (G - G2).cwiseAbs() / pi2;
  d.detT0 = d.T0.determinant();
  d.hermiticity_defect = (d.T0 - d.T0.adjoint()).cwiseAbs().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (G + G.adjoint()));
  d.min_eigenvalue = es.eigenvalues().minCoeff();
  d.residue_defect = res;
  d.diag_direct.resize(n);
  for (int k = 0; k < n; ++k) d.diag_direct[k] = bulk(k, k).real() + direct[k];
  d.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return d;
}

// ---------------------------------------------------------------- determinant identities

inline double log_gamma_3_4() { return std::log(gamma_3_4()); }

// log det Delta_S = log det Delta_F - 4(g - 1) log Gamma(3/4) - log det T(0)
inline double compare_determinants(double log_det_F, cplx detT0, int g, double phase_tol = 1e-6) {
  if (detT0 == cplx(0)) throw ConsistencyError("det T(0) vanishes");
  if (std::abs(std::arg(detT0)) > phase_tol) throw ConsistencyError("det T(0) is not real positive: phase " + std::to_string(std::arg(detT0)));
  return log_det_F - 4.0 * (g - 1) * log_gamma_3_4() - std::log(std::abs(detT0));
}

inline double log_det_F_from_S(double log_det_S, cplx detT0, int g) {
  return log_det_S + 4.0 * (g - 1) * log_gamma_3_4() + std::log(std::abs(detT0));
}

// (Gamma(3/4)/pi)^{4(g-1)}
inline double dhoker_phong_ratio(int g) { return std::pow(gamma_3_4() / std::numbers::pi, 4.0 * (g - 1)); }

// log of det Delta_F / (det Delta_S det S_gram) from separately measured quantities
inline double log_dhoker_phong_assembled(double log_det_F, double log_det_S, cplx detSgram) {
  return log_det_F - log_det_S - std::log(std::abs(detSgram));
}

// B^h(z, z') = -sum S(z, P_k) [S_gram^{-1}]_{kj} conj S(P_j, z'). With S_gram_kj = (S_k, S_j)
// linear in the first slot, the projector onto span{S(P_k, .)} needs the transposed inverse;
// S(z, P_k) = -S(P_k, z) absorbs the sign.
inline cplx bergman_kernel_h(const Eigen::VectorXcd& s_at_z, const Eigen::VectorXcd& s_at_zp, const Eigen::MatrixXcd& S_gram) {
  if (S_gram.size() == 0) return 0.0;
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(S_gram.transpose());
  if (!lu.isInvertible()) throw ConsistencyError("Bergman matrix is singular");
  return (s_at_z.transpose() * lu.solve(s_at_zp.conjugate()))(0, 0);
}

// Values S(P_k, z) at a mesh point (Abel lift of the triangle, principal h branch).
inline Eigen::VectorXcd cone_kernels_at(const SzegoKernel& S, int t, cplx z) {
  const PeriodData& P = *S.surface().periods;
  auto L = detail::barycentric(P.mesh->triangles[t], z);
  return S.at_point(upsilon_potential(P, t, L), pointwise_v(P, t, z));
}

// ---------------------------------------------------------------- spectral determinants

// Heat-trace constant of Delta_F: the per-cone 4pi constant times the number of cones.
inline double friedrichs_heat_constant(int g) { return 2.0 * (g - 1) * cone_trace_constant_closed(4 * std::numbers::pi); }

// The det T(lambda) asymptote (-lambda)^{(1-g)/2} shifts the constant by (g - 1)/2 for Delta_S.
inline double szego_heat_constant(int g) { return friedrichs_heat_constant(g) + 0.5 * (g - 1); }

struct SpectralDeterminant {
  Extension extension = Extension::Friedrichs;
  double log_det = 0, err = 0;
  double c0 = 0;          // constant used in the regularization
  HeatConstantFit fit;    // fitted for comparison
  Eigen::VectorXd eigenvalues;
  double seconds = 0;
};

inline SpectralDeterminant spectral_log_det(const SpinMesh& M, const SpinStructure& spin, Extension e, int N = 300, const EigOptions& eo = {}) {
  auto start = std::chrono::steady_clock::now();
  SignLift L = build_sign_lift(M, spin);
  DiscreteOperator op = assemble_operator(M, L, {e});
  SpectralDeterminant r;
  r.extension = e;
  r.eigenvalues = compute_spectrum(op, N, false, eo).eigenvalues;
  const int g = M.surface.genus;
  const double area = flat_area(M.surface);
  r.c0 = e == Extension::Szego ? szego_heat_constant(g) : friedrichs_heat_constant(g);
  auto [tlo, thi] = default_heat_window(r.eigenvalues, area);
  r.fit = fit_heat_constant(r.eigenvalues, area, tlo, thi);
  ZetaDeterminant z = zeta_determinant(r.eigenvalues, area, r.c0);
  r.log_det = z.log_det;
  r.err = z.err;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// ---------------------------------------------------------------- reports

struct DeterminantReport {
  int g = 0;
  SpinStructure spin;
  double log_det_F = 0, log_det_F_err = 0;
  double log_detT0 = 0, log_detT0_err = 0;
  double theta_constant = 0;  // |theta[p,q](0)|
  double log_det_S = 0, log_det_S_err = 0;
  double Q = 0, Q_err = 0;    // log det Delta_S - 2 log |theta[p,q](0)|
  double ratio_closed = 0;    // (Gamma(3/4)/pi)^{4(g-1)}
  double ratio_formula = 0;   // det F / (det S det S_gram) with det S from the comparison formula
  ScatteringData scattering;
  std::string tau_placeholder = "not computed";
};

// Relative error of det T(0) from the entrywise errors: |tr(T^{-1} dT)| bounded entrywise.
inline double log_det_error(const Eigen::MatrixXcd& T, const Eigen::MatrixXd& dT) {
  if (T.size() == 0) return 0;
  Eigen::MatrixXd Ti = T.inverse().cwiseAbs();
  return (Ti.transpose().array() * dT.array()).sum();
}

inline DeterminantReport assemble_report(const SpinStructure& spin, const SpectralDeterminant& F, const SzegoKernel& S, const ScatteringData& sc) {
  DeterminantReport r;
  r.g = spin.genus;
  r.spin = spin;
  r.log_det_F = F.log_det;
  r.log_det_F_err = F.err;
  r.scattering = sc;
  r.log_detT0 = std::log(std::abs(sc.detT0));
  r.log_detT0_err = log_det_error(sc.T0, sc.quadrature_error);
  r.theta_constant = std::abs(S.theta_zero());
  r.log_det_S = compare_determinants(F.log_det, sc.detT0, r.g, 1e-3);
  r.log_det_S_err = r.log_det_F_err + r.log_detT0_err;
  r.Q = r.log_det_S - 2 * std::log(r.theta_constant);
  r.Q_err = r.log_det_S_err;
  r.ratio_closed = dhoker_phong_ratio(r.g);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  r.ratio_formula = std::exp(log_dhoker_phong_assembled(r.log_det_F, r.log_det_S, sc.detT0 * std::pow(pi2, sc.T0.rows())));
  return r;
}

// Max pairwise |Q - Q'| over the reports (all at the same moduli and mesh).
inline double spin_independence_spread(const std::vector<DeterminantReport>& reports) {
  double s = 0;
  for (size_t a = 0; a < reports.size(); ++a)
    for (size_t b = a + 1; b < reports.size(); ++b) s = std::max(s, std::abs(reports[a].Q - reports[b].Q));
  return s;
}

// ---------------------------------------------------------------- torus bosonization

// Dedekind eta by its product, q = exp(2 pi i tau)
inline cplx dedekind_eta(cplx tau) {
  cplx q = std::exp(cplx(0, 2 * std::numbers::pi) * tau);
  cplx p = std::exp(cplx(0, 2 * std::numbers::pi / 24) * tau);
  cplx qn = q;
  for (int n = 1; n < 2000 && std::abs(qn) > 1e-18; ++n, qn *= q) p *= 1.0 - qn;
  return p;
}

// log det Delta - 2 log |theta[p,q](0|tau) / eta(tau)| for a torus C/(Z + tau Z)
inline double torus_bosonization_constant(double log_det, const ThetaChar& c, cplx tau) {
  Eigen::MatrixXcd B(1, 1);
  B(0, 0) = tau;
  ThetaEvaluator th(B);
  cplx v = th.value(c, Eigen::VectorXcd::Zero(1));
  return log_det - 2.0 * std::log(std::abs(v / dedekind_eta(tau)));
}

}  // namespace spinlap
