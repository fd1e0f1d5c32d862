// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: acceptance [criterion ...]   (default: all of 1..11)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "spinlap/determinants.hpp"

using namespace spinlap;
using std::numbers::pi;

namespace {

const cplx I(0, 1);

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void note(const std::string& s) { std::fprintf(stderr, "  .. %s\n", s.c_str()); }

ModuliPoint tilted_pair() { return {2, {1.0, 1.0}, {I, cplx(0.1, 2.0)}, {0.2, 0.5}}; }
ModuliPoint second_point() { return {2, {1.0, cplx(1.2, 0.1)}, {cplx(0.1, 0.9), cplx(0.3, 1.5)}, {cplx(0.25, 0.1), cplx(0.6, 0.2)}}; }

SpinMesh plain_mesh(const ModuliPoint& m, double h) {
  MeshParams p;
  p.h = h;
  return generate_mesh(build_surface(m), p);
}

std::vector<SpinStructure> even_structures(int g, size_t count) {
  std::vector<SpinStructure> out;
  for (const auto& s : enumerate_spin_structures(g))
    if (arf_parity(s.sigma_a, s.sigma_b) == 0 && out.size() < count) out.push_back(s);
  return out;
}

// Genus-2 pipeline at one mesh, shared by criteria 5, 7 and 9.
struct Genus2Run {
  double h;
  SpinMesh M;
  PeriodData P;
  ThetaSurface ts;
  struct PerSpin {
    SpinStructure spin;
    std::unique_ptr<SzegoKernel> S;
    ScatteringData T;
    SpectralDeterminant F;
  };
  std::vector<PerSpin> spins;
  double mesh_seconds = 0;

  Genus2Run(double h_, size_t nspins) : h(h_), M(plain_mesh(tilted_pair(), h_)), P(period_matrix(M)), ts(make_theta_surface(P)) {
    for (auto& s : even_structures(2, nspins)) {
      PerSpin r;
      r.spin = calibrate(s, ts);
      r.S = std::make_unique<SzegoKernel>(ts, r.spin.characteristic);
      spins.push_back(std::move(r));
    }
  }
  void friedrichs(size_t i) {
    if (spins[i].F.eigenvalues.size()) return;
    spins[i].F = spectral_log_det(M, spins[i].spin, Extension::Friedrichs, 300);
    note(fmt("h=%.3g %s: log det F = %.6f (%.1f s)", h, spins[i].spin.characteristic.label().c_str(), spins[i].F.log_det, spins[i].F.seconds));
  }
  void scattering(size_t i) {
    if (spins[i].T.T0.size()) return;
    spins[i].T = t_matrix_zero(*spins[i].S);
    note(fmt("h=%.3g %s: log det T(0) = %.6f (%.1f s)", h, spins[i].spin.characteristic.label().c_str(), std::log(spins[i].T.detT0.real()),
             spins[i].T.seconds));
  }
};

std::unique_ptr<Genus2Run> g_fine;

Genus2Run& fine() {
  if (!g_fine) g_fine = std::make_unique<Genus2Run>(0.02, 3);
  return *g_fine;
}

// ---------------------------------------------------------------- 1

Outcome theta_heat_equation() {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::map<int, double> by_g;
  for (const auto& r : theta_selftest(3, 100, 20260101))
    if (r.test == "heat_equation") by_g[r.g] = std::max(by_g[r.g], r.residual), worst = std::max(worst, r.residual);
  double sec = since(t0);
  return {worst < 1e-8 && sec < 10 && by_g.size() == 3,
          fmt("max residual g=1,2,3: %.2e, %.2e, %.2e (< 1e-8), %.1f s (< 10 s)", by_g[1], by_g[2], by_g[3], sec)};
}

// ---------------------------------------------------------------- 2

Outcome torus_oracle() {
  auto t0 = std::chrono::steady_clock::now();
  const cplx a = 1.0, b(0.2, 1.1);
  SpinMesh M = plain_mesh({1, {a}, {b}, {}}, 0.02);
  SignLift L = build_sign_lift(M, make_spin_structure({-1}, {-1}));
  auto ev = compute_spectrum(assemble_operator(M, L, {Extension::Friedrichs}), 300).eigenvalues;
  auto ref = oracle::torus_spectrum(a, b, -1, -1, 2000.0);
  double worst = 0;
  for (int i = 0; i < 20; ++i) worst = std::max(worst, std::abs(ev[i] - ref[i]) / ref[i]);
  auto z = zeta_determinant(ev, flat_area(M.surface), 0.0);
  double oracle_ld = oracle::epstein_log_det(a, b, -1, -1, 0.3);
  double dz = std::abs(z.log_det - oracle_ld);
  double sec = since(t0);
  return {worst < 0.01 && dz < 1e-3 && sec < 120,
          fmt("20 modes max rel. error %.2e (< 1e-2); log det %.6f vs Epstein %.6f, diff %.1e (< 1e-3, est. %.1e); %.1f s (< 120 s)", worst,
              z.log_det, oracle_ld, dz, z.err, sec)};
}

// ---------------------------------------------------------------- 3

Outcome cone_kernels() {
  double anti = 0, plane = 0;
  int anti_rows = 0;
  for (const auto& r : cone_selftest()) {
    if (r.test == "antiperiodic_contour_vs_bessel") anti = std::max(anti, r.abs_diff), ++anti_rows;
    if (r.test == "plane_degeneration") plane = std::max(plane, r.abs_diff);
  }
  return {anti < 1e-8 && plane < 1e-10 && anti_rows == 5,
          fmt("contour vs Bessel on 10x10x5 grid: %.2e (< 1e-8); 2pi plane degeneration: %.2e (< 1e-10)", anti, plane)};
}

// ---------------------------------------------------------------- 4

Outcome trace_constants() {
  double worst = 0;
  for (double a : {2 * pi, 3 * pi, 4 * pi}) {
    double closed = -(a / (3 * pi) + 2 * pi / (3 * a)) / 8;
    worst = std::max({worst, std::abs(cone_trace_constant_contour(a) - closed), std::abs(cone_trace_constant_bessel(a) - closed)});
  }
  double v4 = cone_trace_constant_contour(4 * pi);
  return {worst < 1e-3 && std::abs(v4 + 3.0 / 16) < 1e-3,
          fmt("numeric vs closed form at 2pi,3pi,4pi: %.2e (< 1e-3); 4pi value %.8f (-3/16 = -0.1875)", worst, v4)};
}

// ---------------------------------------------------------------- 5

Outcome global_heat_constant() {
  const double target = -0.375;
  Genus2Run coarse(0.028, 1);
  auto t0 = std::chrono::steady_clock::now();
  coarse.friedrichs(0);
  Genus2Run& f = fine();
  f.friedrichs(0);
  double sec = since(t0) - coarse.spins[0].F.seconds;
  double c_coarse = coarse.spins[0].F.fit.c0, c_fine = f.spins[0].F.fit.c0;
  bool improved = std::abs(c_fine - target) < std::abs(c_coarse - target);
  return {c_fine >= -0.45 && c_fine <= -0.30 && improved && sec < 600,
          fmt("fitted constant %.5f at h=0.02 (window spread %.1e) in [-0.45,-0.30]; h=0.028 gave %.5f, error %.1e -> %.1e; %.0f s (< 600 s)",
              c_fine, f.spins[0].F.fit.spread, c_coarse, std::abs(c_coarse - target), std::abs(c_fine - target), sec)};
}

// ---------------------------------------------------------------- 6

Outcome scattering_asymptotics() {
  const double G = gamma_3_4();
  double worst = 0;
  for (cplx lam : {cplx(-1e3, 0), cplx(-1e3, 5e2), cplx(-4e3, -3e3), cplx(-2e4, 1e4), cplx(-1e6, 0), cplx(-5e7, 2e7)})
    worst = std::max(worst, std::abs(model_scattering_diag(lam) * G * G * std::pow(-lam, 0.25) - 1.0));
  double ident = 0;
  for (int g = 2; g <= 5; ++g)
    for (cplx lam : {cplx(-1e3, 0), cplx(-3e4, 2e4)}) {
      auto a = model_scattering_asymptote(lam, g);
      cplx closed = std::exp((4.0 - 4.0 * g) * std::lgamma(0.75)) * std::pow(-lam, 0.5 * (1.0 - g));
      ident = std::max({ident, std::abs(a.det_T / closed - 1.0), std::abs(std::pow(a.T_diag, 2.0 * g - 2.0) / closed - 1.0)});
    }
  return {worst < 1e-6 && ident < 1e-12,
          fmt("|T_kk Gamma(3/4)^2 (-lambda)^{1/4} - 1| <= %.2e (< 1e-6); det T asymptote identity defect %.1e", worst, ident)};
}

// ---------------------------------------------------------------- 7

Outcome t0_structure() {
  Genus2Run& f = fine();
  f.scattering(0);
  const ScatteringData& d = f.spins[0].T;
  const double err = d.quadrature_error.maxCoeff();
  bool ok = d.T0.rows() == 2 && d.hermiticity_defect <= std::max(err, 1e-14) && d.min_eigenvalue > 10 * pi * pi * err;
  double diag_worst = 0, allowed = 0;
  for (int k = 0; k < d.T0.rows(); ++k) {
    // Taylor-route spread plus the polar rule's own 1e-6 relative accuracy
    double combined = pi * pi * d.quadrature_error(k, k) + 1e-6 * d.S_gram(k, k).real();
    double dev = std::abs(d.diag_direct[k] - d.S_gram(k, k).real());
    ok = ok && dev <= combined;
    diag_worst = std::max(diag_worst, dev);
    allowed = std::max(allowed, combined);
  }
  return {ok, fmt("h=0.02: |T0 - T0^*| = %.1e (err %.1e), min eig of S = %.4f > 0; diagonal vs direct norm %.1e (combined %.1e)",
                  d.hermiticity_defect, err, d.min_eigenvalue, diag_worst, allowed)};
}

// ---------------------------------------------------------------- 8

struct AssembledRatio {
  double log_ratio, err;
};

AssembledRatio assembled_ratio(const ModuliPoint& m, double h) {
  auto measure = [&](double hh, bool with_f) {
    SpinMesh M = generate_mesh(build_surface(m), refinement_family(hh));
    PeriodData P = period_matrix(M);
    ThetaSurface ts = make_theta_surface(P);
    SpinStructure s = calibrate(even_structures(2, 1)[0], ts);
    SpectralDeterminant S = spectral_log_det(M, s, Extension::Szego, 300);
    if (!with_f) return std::tuple{S, SpectralDeterminant{}, ScatteringData{}};
    SzegoKernel K(ts, s.characteristic);
    return std::tuple{S, spectral_log_det(M, s, Extension::Friedrichs, 300), t_matrix_zero(K)};
  };
  auto [S, F, T] = measure(h, true);
  auto [S2, unused_F, unused_T] = measure(h * std::sqrt(2.0), false);
  double detSgram = T.detT0.real() * std::pow(pi * pi, 2);
  double lr = log_dhoker_phong_assembled(F.log_det, S.log_det, detSgram);
  double err = F.err + S.err + std::abs(S.log_det - S2.log_det) + log_det_error(T.T0, T.quadrature_error);
  note(fmt("assembled: log det F %.5f, log det S %.5f (coarser %.5f), log det T0 %.5f -> ln ratio %.5f +- %.3f", F.log_det, S.log_det, S2.log_det,
           std::log(T.detT0.real()), lr, err));
  return {lr, err};
}

Outcome comparison_formula() {
  double synth = 0;
  for (int g : {2, 3, 4})
    for (int n = 0; n < 20; ++n) {
      double F = std::sin(1.7 * n + g), detT0 = std::exp(std::cos(0.9 * n - g));
      double S = compare_determinants(F, detT0, g);
      synth = std::max(synth, std::abs(log_dhoker_phong_assembled(F, S, detT0 * std::pow(pi * pi, 2 * g - 2)) - std::log(dhoker_phong_ratio(g))));
    }
  auto r1 = assembled_ratio(tilted_pair(), 0.04), r2 = assembled_ratio(second_point(), 0.04);
  double q1 = std::exp(r1.log_ratio), q2 = std::exp(r2.log_ratio);
  double rel = std::abs(q1 - q2) / (0.5 * (q1 + q2));
  double closed = std::log(dhoker_phong_ratio(2));
  return {synth < 1e-12 && rel <= 0.15,
          fmt("synthetic reduction defect %.1e; assembled ln ratio %.4f +- %.3f and %.4f +- %.3f (closed %.4f), cross-moduli %.1f%% (<= 15%%)", synth,
              r1.log_ratio, r1.err, r2.log_ratio, r2.err, closed, 100 * rel)};
}

// ---------------------------------------------------------------- 9

Outcome spin_independence() {
  Genus2Run& f = fine();
  std::vector<DeterminantReport> reports;
  std::string qs;
  for (size_t i = 0; i < f.spins.size(); ++i) {
    f.friedrichs(i);
    f.scattering(i);
    reports.push_back(assemble_report(f.spins[i].spin, f.spins[i].F, *f.spins[i].S, f.spins[i].T));
    qs += fmt("%s%.5f", i ? ", " : "", reports.back().Q);
  }
  double spread = spin_independence_spread(reports);

  const cplx tau(0.2, 1.1);
  SpinMesh M = plain_mesh({1, {1.0}, {tau}, {}}, 0.035);
  PeriodData P = period_matrix(M);
  ThetaSurface ts = make_theta_surface(P);
  std::vector<double> k;
  for (auto s : even_structures(1, 3)) {
    s = calibrate(s, ts);
    k.push_back(torus_bosonization_constant(spectral_log_det(M, s, Extension::Friedrichs, 300).log_det, s.characteristic, tau));
  }
  double torus = *std::max_element(k.begin(), k.end()) - *std::min_element(k.begin(), k.end());
  return {reports.size() >= 2 && spread < 0.1 && k.size() == 3 && torus < 1e-3,
          fmt("g=2, h=0.02, %zu even spins: Q = %s, spread %.1e (< 0.1); torus, 3 even spins: spread %.1e (< 1e-3)", reports.size(), qs.c_str(),
              spread, torus)};
}

// ---------------------------------------------------------------- 10

Outcome extension_signatures() {
  SpinMesh M = plain_mesh(tilted_pair(), 0.04);
  SignLift L = build_sign_lift(M, make_spin_structure({-1, -1}, {-1, -1}));
  double ratio[2];
  for (int which = 0; which < 2; ++which) {
    Extension e = which ? Extension::Szego : Extension::Friedrichs;
    auto op = assemble_operator(M, L, {e});
    auto sp = compute_spectrum(op, 6, true);
    double kept = 0, dropped = 0;
    for (int i = 0; i < 6; ++i)
      for (int k = 0; k < 2; ++k) {
        auto c = extract_singular_coefficients(M, L, op, sp.vectors.col(i), k);
        double p0 = c.size_plus(0), m0 = c.size_minus(0);
        kept += std::pow(which ? p0 : m0, 2);
        dropped += std::pow(which ? m0 : p0, 2);
      }
    ratio[which] = std::sqrt(kept / dropped);
  }
  auto H = compute_spectrum(assemble_operator(M, L, {Extension::Holomorphic}), 14).eigenvalues;
  auto F = compute_spectrum(assemble_operator(M, L, {Extension::Friedrichs}), 10).eigenvalues;
  int kernel = 0;
  for (int i = 0; i < H.size(); ++i) kernel += H[i] < 0.05 * F[0];
  double worst = 0;
  for (int i = 0; i < 10; ++i) worst = std::max(worst, std::abs(H[i + kernel] - F[i]) / F[i]);
  return {ratio[0] > 10 && ratio[1] > 10 && kernel == 2 && H[2] > 0.9 * F[0] && worst < 0.02,
          fmt("suppression F %.0fx, S %.0fx (> 10x); holomorphic kernel dim %d (2g-2 = 2; %.3f, %.3f below gap to %.3f); F/h nonzero spectra %.2f%% (< 2%%)",
              ratio[0], ratio[1], kernel, H[0], H[1], H[2], 100 * worst)};
}

// ---------------------------------------------------------------- 11

Outcome moduli_identities() {
  double area = 0;
  for (const auto& m : {tilted_pair(), second_point(), ModuliPoint{3, {1.0, 1.0, 1.0}, {I, cplx(0.2, 1.1), I},
                                                                        {0.1 + 0.3 * I, 0.4 + 0.3 * I, 0.6 + 0.7 * I, 0.85 + 0.7 * I}}}) {
    TranslationSurface s = build_surface(m);
    cplx sum = 0;
    for (int k = 0; k < m.genus; ++k) sum += m.A[k] * std::conj(m.B[k]);
    area = std::max(area, std::abs(flat_area(s) + sum.imag()) / flat_area(s));
  }
  SpinMesh M = plain_mesh(tilted_pair(), 0.02);
  double worst = 0;
  bool stable = true;
  for (Coordinate nu : {Coordinate{'A', 0}, Coordinate{'A', 1}, Coordinate{'B', 0}, Coordinate{'B', 1}, Coordinate{'C', 0}, Coordinate{'C', 1}}) {
    DerivativeCheck r = check_dB_dnu(M, nu, 1e-3);
    worst = std::max(worst, r.relative_error);
    stable = stable && !r.unstable;
  }
  return {area < 1e-12 && worst < 1e-3 && stable,
          fmt("area identity rel. defect %.1e (< 1e-12); dB/dnu vs dual-cycle integral at h=0.02, 6 coordinates: %.1e (< 1e-3)", area, worst)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"theta heat equation", theta_heat_equation},
      {"torus spectral oracle", torus_oracle},
      {"cone heat kernels", cone_kernels},
      {"per-cone trace constant", trace_constants},
      {"global heat-trace constant", global_heat_constant},
      {"scattering asymptotics", scattering_asymptotics},
      {"T(0) structure", t0_structure},
      {"comparison formula", comparison_formula},
      {"spin-structure independence", spin_independence},
      {"extension-domain signatures", extension_signatures},
      {"moduli-geometry identities", moduli_identities},
  };
  std::set<int> picked;
  for (int i = 1; i < argc; ++i) picked.insert(std::atoi(argv[i]));
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int n = int(i) + 1;
    if (!picked.empty() && !picked.count(n)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first, o.detail.c_str(), since(t0));
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
