// Prime form and Szegő kernel of a flat surface from its FEM period data.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinlap/hodge.hpp"
#include "spinlap/homology_spin.hpp"
#include "spinlap/theta.hpp"

namespace spinlap {

struct DegenerateSpinError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegeneratePointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CalibrationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ExtractionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
// sum_i a_i b_i without conjugation
inline cplx bilinear(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) { return (a.array() * b.array()).sum(); }

// Square root of w on the branch closest to `near`.
inline cplx sqrt_near(cplx w, cplx near) {
  cplx s = std::sqrt(w);
  return std::abs(s - near) <= std::abs(s + near) ? s : -s;
}

// Abel lift and v x at x0 inside the stored circle of cone k (Cauchy formulas).
inline void circle_eval(const ConeCircle& c, cplx x0, Eigen::VectorXcd& psi, Eigen::VectorXcd& f) {
  const int N = static_cast<int>(c.x.size());
  psi.setZero(c.psi.cols());
  f.setZero(c.psi.cols());
  for (int m = 0; m < N; ++m) {
    cplx d = c.x[m] - x0;
    psi += (c.x[m] / (d * double(N))) * c.psi.row(m).transpose();
    f += (c.x[m] / (d * d * double(N))) * c.psi.row(m).transpose();
  }
}
}  // namespace detail

// One odd characteristic with its theta gradient at the origin; h_delta^2 = grad . v.
struct OddCharacteristic {
  ThetaChar delta;
  Eigen::VectorXcd grad;
  double score = 0;  // smallest normalized |h_delta^2| over the cone points
};

// Theta functions of the discrete period matrix plus the data the kernels share.
struct ThetaSurface {
  const PeriodData* periods = nullptr;  // must outlive this object
  ThetaEvaluator theta;
  std::vector<OddCharacteristic> odd;      // best first
  std::vector<Eigen::VectorXcd> cone_abel;  // Abel lift of each cone point (circle mean)
};

// keeps a pointer to P
ThetaSurface make_theta_surface(PeriodData&&, double = 1e-12) = delete;
inline ThetaSurface make_theta_surface(const PeriodData& P, double tol = 1e-12) {
  ThetaSurface ts{&P, ThetaEvaluator(P.B_matrix, tol), {}, {}};
  const int g = P.genus;
  for (const auto& c : P.circles) ts.cone_abel.push_back(c.psi.colwise().mean().transpose());
  Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(g);
  for (const ThetaChar& c : all_characteristics(g)) {
    if (c.even()) continue;
    OddCharacteristic o{c, ts.theta.gradient(c, zero), 1.0};
    for (const auto& circ : P.circles)
      o.score = std::min(o.score, std::abs(detail::bilinear(o.grad, circ.f0)) / (o.grad.norm() * circ.f0.norm()));
    if (o.grad.norm() > 1e-8) ts.odd.push_back(std::move(o));
  }
  if (ts.odd.empty()) throw DegeneratePointError("every odd theta constant has a vanishing gradient");
  std::stable_sort(ts.odd.begin(), ts.odd.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return ts;
}

// Integral of v dz along the straight segment z -> z + d. Unlike potential differences
// it carries no d-bar discretization defect, so it is exact to first order in d.
inline AbelStep holomorphic_increment(const PeriodData& P, int t, cplx z, cplx d) {
  static const GaussLegendre gl(6);
  AbelStep out;
  out.value = Eigen::VectorXcd::Zero(P.genus);
  auto steps = walk_segment(*P.mesh, t, z, d);
  for (const auto& s : steps) {
    cplx len = s.exit - s.entry;
    for (int i = 0; i < gl.size(); ++i) out.value += (0.5 * gl.weight(i) * len) * pointwise_v(P, s.tri, s.entry + 0.5 * (1.0 + gl.node(i)) * len);
  }
  out.tri = steps.back().tri;
  out.end = steps.back().exit;
  return out;
}

// Samples along the straight path z -> z + d: triangle, point, Abel increment from z, v.
struct PathSample {
  int tri;
  cplx z;
  Eigen::VectorXcd abel, v;
};

inline std::vector<PathSample> sample_path(const PeriodData& P, int t, cplx z, cplx d, int n) {
  std::vector<PathSample> out;
  out.push_back({t, z, Eigen::VectorXcd::Zero(P.genus), pointwise_v(P, t, z)});
  for (int k = 0; k < n; ++k) {
    const PathSample& s = out.back();
    AbelStep step = holomorphic_increment(P, s.tri, s.z, d / double(n));
    out.push_back({step.tri, step.end, s.abel + step.value, pointwise_v(P, step.tri, step.end)});
  }
  return out;
}

// E(x, y) for y = x + d reached by the straight path. h_delta(x) is the principal root;
// h_delta(y) continues it along the path.
struct PrimeFormValue {
  cplx value;
  cplx h_start, h_end;
  Eigen::VectorXcd abel;  // A(y) - A(x) along the path
  int odd_index = 0;      // which odd characteristic was used
  int end_tri = -1;
  cplx end;
};

inline PrimeFormValue prime_form(const ThetaSurface& ts, int t, cplx z, cplx d, int min_samples = 16) {
  if (d == cplx(0)) throw std::invalid_argument("prime form needs distinct points");
  const PeriodData& P = *ts.periods;
  int n = std::max(min_samples, static_cast<int>(std::ceil(std::abs(d) / P.mesh->params.h)));
  for (int refine = 0; refine < 4; ++refine, n *= 2) {
    std::vector<PathSample> path = sample_path(P, t, z, d, n);
    bool resolved = true;
    for (int o = 0; o < static_cast<int>(ts.odd.size()) && resolved; ++o) {
      const OddCharacteristic& od = ts.odd[o];
      cplx h = std::sqrt(detail::bilinear(od.grad, path[0].v));
      bool vanishes = false, jumped = false;
      for (const auto& s : path) {
        cplx h2 = detail::bilinear(od.grad, s.v);
        if (std::abs(h2) < 1e-6 * od.grad.norm() * s.v.norm()) vanishes = true;
        cplx next = detail::sqrt_near(h2, h);
        if (std::abs(std::arg(next / h)) > std::numbers::pi / 4) jumped = true;
        h = next;
      }
      if (vanishes) continue;
      if (jumped) {
        resolved = false;
        break;
      }
      PrimeFormValue r;
      r.h_start = std::sqrt(detail::bilinear(od.grad, path[0].v));
      r.h_end = h;
      r.abel = path.back().abel;
      r.odd_index = o;
      r.value = ts.theta.value(od.delta, r.abel) / (r.h_start * r.h_end);
      r.end_tri = path.back().tri;
      r.end = path.back().z;
      return r;
    }
    if (resolved) break;
  }
  throw DegeneratePointError("h_delta vanishes or cannot be continued along the path for every odd characteristic");
}

// Even-spin Szegő kernel S(z, z') = theta[p,q](A(z') - A(z)) / (theta[p,q](0) E(z, z')).
// Principal part 1/(z' - z) in a chart.
class SzegoKernel {
 public:
  SzegoKernel(const ThetaSurface& ts, ThetaChar c, double tol = 1e-8) : ts_(&ts), c_(std::move(c)) {
    if (!c_.even()) throw DegenerateSpinError("Szegő kernel needs an even characteristic, got " + c_.label());
    theta0_ = ts.theta.value(c_, Eigen::VectorXcd::Zero(ts.theta.genus()));
    if (std::abs(theta0_) < tol) throw DegenerateSpinError("theta constant of " + c_.label() + " vanishes");
    for (const OddCharacteristic& od : ts.odd) {
      Branch b{&od, {}};
      for (const auto& circ : ts.periods->circles) {
        cplx h2 = detail::bilinear(od.grad, circ.f0);
        if (std::abs(h2) < 1e-6 * od.grad.norm() * circ.f0.norm()) break;
        b.cone_h.push_back(std::sqrt(h2));
      }
      if (b.cone_h.size() != ts.periods->circles.size()) {
        if (branches_.empty()) throw DegeneratePointError("h_delta vanishes at a cone point");
        continue;
      }
      if (branches_.empty() || align(b)) branches_.push_back(std::move(b));
    }
  }

  const ThetaChar& characteristic() const { return c_; }
  cplx theta_zero() const { return theta0_; }
  const ThetaSurface& surface() const { return *ts_; }
  int num_cones() const { return static_cast<int>(branches_[0].cone_h.size()); }
  // h_delta at P_k in the x chart, principal root
  cplx cone_h(int k) const { return branches_[0].cone_h[k]; }
  // odd characteristics available to at_point
  int num_branches() const { return static_cast<int>(branches_.size()); }

  // S(z, z + d) with z in triangle t.
  cplx operator()(int t, cplx z, cplx d) const {
    PrimeFormValue E = prime_form(*ts_, t, z, d);
    return ts_->theta.value(c_, E.abel) / (theta0_ * E.value);
  }

  // S(P_i, w) at a point with Abel lift A and h_delta value h there (chart of h).
  cplx from_cone(int i, const Eigen::VectorXcd& A, cplx h) const { return eval(branches_[0], i, A, h); }

  // h_delta^2 = grad . v for the odd characteristic used at the cones
  cplx h_squared(const Eigen::VectorXcd& v) const { return detail::bilinear(branches_[0].od->grad, v); }

  // All S(P_i, w) at a point with Abel lift A and holomorphic v (same chart), using the odd
  // characteristic whose h_delta^2 is largest there. Determined up to a common sign.
  Eigen::VectorXcd at_point(const Eigen::VectorXcd& A, const Eigen::VectorXcd& v) const {
    const Branch* best = &branches_[0];
    double score = -1;
    for (const Branch& b : branches_) {
      double s = std::abs(detail::bilinear(b.od->grad, v)) / b.od->grad.norm();
      if (s > score) score = s, best = &b;
    }
    cplx h = std::sqrt(detail::bilinear(best->od->grad, v));
    Eigen::VectorXcd s(num_cones());
    for (int i = 0; i < num_cones(); ++i) s[i] = eval(*best, i, A, h);
    return s;
  }

 private:
  struct Branch {
    const OddCharacteristic* od;
    std::vector<cplx> cone_h;
  };

  cplx eval(const Branch& b, int i, const Eigen::VectorXcd& A, cplx h) const {
    Eigen::VectorXcd D = A - ts_->cone_abel[i];
    return ts_->theta.value(c_, D) * b.cone_h[i] * h / (theta0_ * ts_->theta.value(b.od->delta, D));
  }

  // Fix the signs of b.cone_h so that b and the first branch give the same kernels up to one
  // common sign. The relative signs are locally constant, so one point decides; it is taken inside
  // the stored circle of cone 0 where both h^2 are large. Returns false if the two disagree.
  bool align(Branch& b) const {
    const ConeCircle& c = ts_->periods->circles[0];
    const Branch& a = branches_[0];
    Eigen::VectorXcd psi, f, best_psi, best_f;
    double q = -1;
    for (int m = 0; m < 16; ++m) {
      detail::circle_eval(c, std::polar(0.7 * c.rho, 2 * std::numbers::pi * (m + 0.25) / 16), psi, f);
      double qa = std::abs(detail::bilinear(a.od->grad, f)) / a.od->grad.norm();
      double qb = std::abs(detail::bilinear(b.od->grad, f)) / b.od->grad.norm();
      if (std::min(qa, qb) > q) q = std::min(qa, qb), best_psi = psi, best_f = f;
    }
    cplx ha = std::sqrt(detail::bilinear(a.od->grad, best_f)), hb = std::sqrt(detail::bilinear(b.od->grad, best_f));
    cplx r0 = eval(b, 0, best_psi, hb) / eval(a, 0, best_psi, ha);
    for (int i = 0; i < num_cones(); ++i) {
      cplx r = eval(b, i, best_psi, hb) / eval(a, i, best_psi, ha);
      // FEM data satisfy the identity only to discretization accuracy; a sign needs much less
      if (std::abs(std::abs(r) - 1) > 1e-2 || std::min(std::abs(r / r0 - 1.0), std::abs(r / r0 + 1.0)) > 1e-2) return false;
      if ((r / r0).real() < 0) b.cone_h[i] = -b.cone_h[i];
    }
    return true;
  }

  const ThetaSurface* ts_;
  ThetaChar c_;
  cplx theta0_;
  std::vector<Branch> branches_;
};

// S(z, z') - 1/(z' - z) = a0 + a1 (z' - z) + ..., sampled on a circle around z.
struct NearDiagonal {
  cplx a0, a1;
  cplx a0_formula;  // sum_i d_i log theta(0) v_i(z)
  Eigen::MatrixXcd theta_hessian_ratio;  // d^2 theta(0) / theta(0)
  Eigen::VectorXcd v;
  double drift = 0;  // |a0(eps) - a0(eps/2)| + |a1(eps) - a1(eps/2)|
};

inline NearDiagonal szego_near_diagonal(const SzegoKernel& S, int t, cplx z, double eps = 0, int nodes = 16) {
  const PeriodData& P = *S.surface().periods;
  if (eps <= 0) eps = 0.2 * P.mesh->params.h;
  auto coeffs = [&](double r) {
    cplx a0 = 0, a1 = 0;
    for (int n = 0; n < nodes; ++n) {
      cplx d = std::polar(r, 2 * std::numbers::pi * (n + 0.5) / nodes);
      cplx f = S(t, z, d) - 1.0 / d;
      a0 += f / double(nodes);
      a1 += f / (d * double(nodes));
    }
    return std::pair{a0, a1};
  };
  NearDiagonal out;
  auto [a0, a1] = coeffs(eps);
  auto [b0, b1] = coeffs(0.5 * eps);
  out.a0 = b0;
  out.a1 = b1;
  out.drift = std::abs(a0 - b0) + std::abs(a1 - b1);
  if (!std::isfinite(out.drift)) throw ExtractionError("non-finite Szegő samples near the diagonal");
  out.v = pointwise_v(P, t, z);
  const ThetaEvaluator& th = S.surface().theta;
  ThetaResult r = th.evaluate(S.characteristic(), Eigen::VectorXcd::Zero(P.genus), 2);
  out.a0_formula = detail::bilinear(r.grad / r.value, out.v);
  out.theta_hessian_ratio = r.hess / r.value;
  return out;
}

// ---- characteristic calibration by monodromy ----

// Winding number of h_delta^2 along the straight cycle of torus j ('a' or 'b') with samples.
namespace detail {

struct Winding {
  double turns = std::nan("");
  double clearance = 0;  // min of |grad . v| / (|grad| |v|) along the path
};

// sampling doubled until every step turns by less than pi/4
inline Winding straight_winding(const PeriodData& P, const Eigen::VectorXcd& grad, int t, cplx z, cplx dir, int n) {
  Winding w;
  for (; n <= 16384; n *= 2) {
    std::vector<PathSample> path = sample_path(P, t, z, dir, n);
    double turn = 0, worst = 0, clear = 1;
    cplx prev = detail::bilinear(grad, path[0].v);
    for (size_t k = 1; k < path.size(); ++k) {
      cplx cur = detail::bilinear(grad, path[k].v);
      clear = std::min(clear, std::abs(cur) / (grad.norm() * path[k].v.norm()));
      if (clear < 1e-8) return w;
      double step = std::arg(cur / prev);
      worst = std::max(worst, std::abs(step));
      turn += step;
      prev = cur;
    }
    if (worst < std::numbers::pi / 4) return {turn / (2 * std::numbers::pi), clear};
  }
  return w;
}

}  // namespace detail

// Winding number of h_delta^2 = grad . v along the straight a_j or b_j cycle through the base
// point that defines the spin signs. On the discrete surface the double zero of h_delta^2 splits,
// and a path running between the halves picks up a spurious odd turn. The path is therefore
// slid sideways to the position farthest from zeros, provided the sliding sweeps no slit and so
// no cone (which keeps the sign holonomy fixed). NaN if no position is clean.
inline double cycle_winding(const PeriodData& P, const Eigen::VectorXcd& grad, int j, char which, int n = 256) {
  const SpinMesh& M = *P.mesh;
  const Torus& T = M.surface.tori[j];
  cplx dir = which == 'a' ? T.A : T.B;
  const cplx p0 = clear_base_point(M, j, dir, 2.0 * M.params.h);
  const cplx perp = cplx(0, 1) * dir / std::abs(dir);
  const double scale = std::min(std::abs(T.A), std::abs(T.B));
  auto sweep_clear = [&](double s) {
    for (int l = 0; l <= 16; ++l) {
      cplx p = p0 + (s * l / 16.0) * perp;
      for (const auto& sl : M.surface.slits)
        if ((sl.torus_lo == j || sl.torus_hi == j) && detail::lattice_segment_distance(T, p, p + dir, sl.c0, sl.c1, false) < M.params.h)
          return false;
    }
    return true;
  };
  PointLocator loc(M);
  detail::Winding best;
  for (double s : {0.0, 0.02, -0.02, 0.04, -0.04, 0.07, -0.07, 0.1, -0.1}) {
    if (best.clearance > 0.05) break;
    if (s != 0 && !sweep_clear(s * scale)) continue;
    try {
      auto [t, z] = loc.locate(j, p0 + s * scale * perp);
      detail::Winding w = detail::straight_winding(P, grad, t, z, dir, n);
      if (std::isfinite(w.turns) && w.clearance > best.clearance) best = w;
    } catch (const DegenerateWalk&) {
    }
  }
  return best.clearance > 1e-3 ? best.turns : std::nan("");
}

struct CalibrationResult {
  ThetaChar characteristic;
  int odd_used = 0;  // odd characteristics that gave a clean answer
  bool parity_matches_arf = false;
};

// Characteristic whose theta-formula Szegő kernel has the automorphy signs (sa, sb) of
// the z-representatives along the straight cycles. Along a_j the kernel S(w, .) picks up
// (-1)^{2 p_j + 2 delta'_j} from the theta quotient and (-1)^{winding} from h_delta.
inline CalibrationResult calibrate_characteristic(const std::vector<int>& sa, const std::vector<int>& sb, const ThetaSurface& ts) {
  const PeriodData& P = *ts.periods;
  const int g = P.genus;
  if (static_cast<int>(sa.size()) != g || static_cast<int>(sb.size()) != g) throw std::invalid_argument("sign vectors must have genus length");
  CalibrationResult out;
  bool have = false;
  for (const auto& od : ts.odd) {
    ThetaChar c{std::vector<double>(g), std::vector<double>(g)};
    bool clean = true;
    for (int j = 0; j < g && clean; ++j)
      for (char which : {'a', 'b'}) {
        double w = cycle_winding(P, od.grad, j, which);
        if (!std::isfinite(w) || std::abs(w - std::round(w)) > 0.1) {
          clean = false;
          break;
        }
        int hs = (std::lround(w) % 2 == 0) ? 1 : -1;
        double dchar = which == 'a' ? od.delta.p[j] : od.delta.q[j];
        int ds = dchar != 0.0 ? -1 : 1;
        int sigma = which == 'a' ? sa[j] : sb[j];
        // (-1)^{2 c_j} = sigma * hs * ds
        double cj = sigma * hs * ds > 0 ? 0.0 : 0.5;
        (which == 'a' ? c.p : c.q)[j] = cj;
      }
    if (!clean) continue;
    if (have && !(c == out.characteristic))
      throw CalibrationFailure("odd characteristics " + ts.odd.front().delta.label() + " and " + od.delta.label() +
                               " give different characteristics");
    out.characteristic = c;
    have = true;
    ++out.odd_used;
  }
  if (!have) throw CalibrationFailure("no odd characteristic gives integer windings along the basis cycles");
  out.parity_matches_arf = out.characteristic.parity() == arf_parity(sa, sb);
  if (!out.parity_matches_arf) throw CalibrationFailure("calibrated characteristic " + out.characteristic.label() + " disagrees with the Arf parity");
  return out;
}

inline SpinStructure calibrate(SpinStructure s, const ThetaSurface& ts) {
  s.characteristic = calibrate_characteristic(s.sigma_a, s.sigma_b, ts).characteristic;
  s.calibrated = true;
  return s;
}

}  // namespace spinlap
