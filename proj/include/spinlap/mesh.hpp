// Triangulations of slit-torus surfaces.
//
// Every triangle lives in the chart of its own torus and stores its corner
// coordinates there, so neighbouring triangles differ by a translation: a
// lattice vector on the same torus, an arbitrary one across a slit. Slit
// vertices are doubled into an "alpha" chain (upper bank of the lower torus,
// lower bank of the upper one) and a "beta" chain (the other two banks).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "spinlap/surface.hpp"

namespace spinlap {

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MeshParams {
  double h = 0.05;       // bulk edge length
  double grading = 0.7;  // ring ratio towards the cones
  int rings = 40;        // graded levels; innermost size h * grading^rings
  double chart_radius = 0.0;  // 0 picks a default from the slit geometry
};

// Parameters that refine the bulk and the graded cone zones together: the
// local size near a cone is about 2 (1 - grading) r, so kappa = 1 - grading
// scales with h, and the ring count keeps the innermost size fixed.
inline MeshParams refinement_family(double h, double h_ref = 0.04, double grading_ref = 0.7, int rings_ref = 40) {
  MeshParams p;
  p.h = h;
  p.grading = 1.0 - (1.0 - grading_ref) * h / h_ref;
  if (!(p.grading > 0.05 && p.grading < 1.0)) throw std::invalid_argument("h outside the refinement family");
  p.rings = static_cast<int>(std::ceil(rings_ref * std::log(grading_ref) / std::log(p.grading)));
  return p;
}

struct TorusGridRecipe {
  int basis = 0;  // 0: (e1, e2), 1: (e2, -e1)
  std::array<std::array<int, 2>, 2> reduction{{{1, 0}, {0, 1}}};  // (e1, e2) in terms of (A, B), frozen for replays
  int Ns = 0, Nt = 0;
  std::vector<int> gap_cells;
  std::vector<std::vector<long>> snap_rows;  // per slit on the torus, per slit vertex
  std::vector<char> diagonal;                // per cell: 0 main, 1 anti
};

struct MeshRecipe {
  std::vector<int> slit_segments;
  std::vector<TorusGridRecipe> tori;
  std::vector<std::array<int, 2>> bisections;  // (triangle, local edge)
};

struct MeshTriangle {
  std::array<int, 3> v{};
  std::array<cplx, 3> z{};
  int torus = 0;
  double area() const { return 0.5 * (std::conj(z[1] - z[0]) * (z[2] - z[0])).imag(); }
  cplx centroid() const { return (z[0] + z[1] + z[2]) / 3.0; }
  double edge_length(int i) const { return std::abs(z[(i + 1) % 3] - z[i]); }
};

struct MeshVertex {
  int torus = 0;
  cplx z;          // coordinate in the first triangle that referenced it
  int cone = -1;   // cone index or -1
  int slit = -1;   // slit whose chain carries the vertex, or -1
  int chain = 0;   // +1 alpha, -1 beta, 0 off the slit interiors
};

struct MeshEdge {
  int v0, v1;
  std::array<int, 2> tri{-1, -1};
  std::array<int, 2> local{-1, -1};  // edge index inside each triangle: (v[i], v[i+1])
  int slit = -1;  // glued slit edges only
  int chain = 0;
};

struct ConeChart {
  int cone = -1;
  int vertex = -1;
  double radius = 0.0;
  double theta_s = 0.0;            // direction of the slit ray out of the cone
  std::vector<int> tris;           // BFS order, tris[0] starts the sheet
  std::vector<cplx> apex;          // cone position in each triangle's chart
  std::vector<double> phi;         // unwrapped angle of each centroid in [theta_s, theta_s + 4 pi)
  std::vector<int> parent;         // position in `tris` of the BFS parent, -1 for the root
  std::vector<int> parent_edge;    // mesh edge crossed from the parent
  std::unordered_map<int, int> index;  // triangle -> position in `tris`
};

struct SpinMesh {
  TranslationSurface surface;
  MeshParams params;
  MeshRecipe recipe;
  std::vector<MeshVertex> vertices;
  std::vector<MeshTriangle> triangles;
  std::vector<MeshEdge> edges;
  std::vector<std::array<int, 3>> tri_edges;
  std::vector<int> cone_vertex;
  std::vector<ConeChart> charts;
  double h_min = 0.0;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  // neighbour across local edge i of triangle t, with its local edge index
  std::array<int, 2> neighbor(int t, int i) const {
    const MeshEdge& e = edges[tri_edges[t][i]];
    return e.tri[0] == t && e.local[0] == i ? std::array<int, 2>{e.tri[1], e.local[1]} : std::array<int, 2>{e.tri[0], e.local[0]};
  }
  // chart translation: z_t(p) - z_n(p) for a point p on the edge shared by t and n
  cplx translation(int t, int i) const {
    auto [n, j] = neighbor(t, i);
    // shared vertex v[i] of t is v[j+1] of n (opposite orientation)
    return triangles[t].z[i] - triangles[n].z[(j + 1) % 3];
  }
};

namespace detail {

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

inline long floor_div(long a, long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

inline cplx round_to_lattice(cplx w, cplx f1, cplx f2) {
  auto uv = lattice_coords(w, f1, f2);
  return std::round(uv[0]) * f1 + std::round(uv[1]) * f2;
}

inline double point_triangle_distance(cplx p, const std::array<cplx, 3>& z) {
  auto cross = [](cplx a, cplx b) { return (std::conj(a) * b).imag(); };
  bool inside = cross(z[1] - z[0], p - z[0]) >= 0 && cross(z[2] - z[1], p - z[1]) >= 0 && cross(z[0] - z[2], p - z[2]) >= 0;
  if (inside) return 0.0;
  return std::min({point_segment_distance(p, z[0], z[1]), point_segment_distance(p, z[1], z[2]), point_segment_distance(p, z[2], z[0])});
}

inline double wrap_pi(double a) {
  const double tp = 2 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, tp);
  if (a < 0) a += tp;
  return a - std::numbers::pi;
}

// Distance from p to the nearest lattice translate of c.
inline double torus_distance(cplx p, cplx c, const Torus& t) {
  auto uv = lattice_coords(p - c, t.e1, t.e2);
  double best = 1e300;
  for (int m = -1; m <= 1; ++m)
    for (int n = -1; n <= 1; ++n) {
      cplx w = (std::round(uv[0]) + m) * t.e1 + (std::round(uv[1]) + n) * t.e2;
      best = std::min(best, std::abs(p - c - w));
    }
  return best;
}

struct GridVertex {
  cplx z;       // canonical coordinate
  cplx w;       // lattice offset with grid position = z + w
  int slit = -1;
  int index = -1;  // position along the slit, 0..n
};

struct LocalTri {
  std::array<int, 3> lv;
  std::array<cplx, 3> z;
};

struct TorusGrid {
  std::vector<GridVertex> verts;
  std::vector<LocalTri> tris;
};

inline TorusGrid build_torus_grid(const TranslationSurface& S, int j, double h, const std::vector<int>& nseg,
                                  TorusGridRecipe& rec, bool replay) {
  const Torus& T = S.tori[j];
  std::vector<int> ks;
  for (int k = 0; k < static_cast<int>(S.slits.size()); ++k)
    if (S.slits[k].torus_lo == j || S.slits[k].torus_hi == j) ks.push_back(k);

  if (!replay) rec.reduction = T.M;
  // a replayed surface may reduce differently (|A| = |B| ties); keep the recorded basis
  const auto& R = rec.reduction;
  const cplx E1 = double(R[0][0]) * T.A + double(R[0][1]) * T.B, E2 = double(R[1][0]) * T.A + double(R[1][1]) * T.B;
  auto basis = [&](int b) { return b == 0 ? std::array<cplx, 2>{E1, E2} : std::array<cplx, 2>{E2, -E1}; };
  auto counts = [&](int b) {
    auto f = basis(b);
    double height = T.area() / std::abs(f[0]);
    return std::array<int, 2>{static_cast<int>(std::ceil(std::abs(f[0]) / h - 1e-9)),
                              static_cast<int>(std::ceil(height / h - 1e-9))};
  };
  // figure of merit for representing the slits on a basis: worst row change per slit column
  auto slope_cost = [&](int b) {
    auto f = basis(b);
    auto N = counts(b);
    double worst = 0.0;
    for (int k : ks) {
      auto dd = lattice_coords(S.slits[k].direction(), f[0], f[1]);
      double steps = std::abs(dd[1]) * N[1] / nseg[k];
      double spread = std::abs(dd[0]) * N[0] / nseg[k];
      worst = std::max(worst, steps);
      if (spread < 0.35 || spread > 1.6) worst = std::max(worst, 10.0);
    }
    return worst;
  };
  if (!replay) {
    double c0 = slope_cost(0), c1 = slope_cost(1);
    rec.basis = c1 < c0 - 1e-12 ? 1 : 0;
    if (std::min(c0, c1) > 0.75)
      throw MeshError("slit direction on torus " + std::to_string(j) + " cannot be aligned with the structured grid at h=" + std::to_string(h));
    auto N = counts(rec.basis);
    rec.Ns = N[0];
    rec.Nt = N[1];
    if (rec.Ns < 3 || rec.Nt < 3)
      throw MeshError("mesh resolution h=" + std::to_string(h) + " too coarse for torus " + std::to_string(j) + " (fewer than 3 cells across)");
  }
  const auto f = basis(rec.basis);
  const cplx f1 = f[0], f2 = f[1];
  const int Nt = rec.Nt;
  const cplx o = ks.empty() ? cplx(0.0) : S.slits[ks[0]].c0;

  struct SI {
    int k;
    double s0, t0, ds, dt, lo, len;
  };
  std::vector<SI> si;
  for (int k : ks) {
    auto st = lattice_coords(S.slits[k].c0 - o, f1, f2);
    auto dd = lattice_coords(S.slits[k].direction(), f1, f2);
    double lo = dd[0] >= 0 ? st[0] : st[0] + dd[0];
    lo -= std::floor(lo);
    if (lo > 1.0 - 1e-13) lo = 0.0;
    if (std::abs(dd[0]) >= 1.0 - 1e-9) throw MeshError("slit " + std::to_string(k) + " wraps around torus " + std::to_string(j));
    si.push_back({k, st[0], st[1], dd[0], dd[1], lo, std::abs(dd[0])});
  }
  std::sort(si.begin(), si.end(), [](const SI& a, const SI& b) { return a.lo < b.lo; });

  std::vector<double> cs;
  std::vector<std::array<int, 2>> ctag;
  if (si.empty()) {
    for (int c = 0; c < rec.Ns; ++c) {
      cs.push_back(double(c) / rec.Ns);
      ctag.push_back({-1, -1});
    }
  } else {
    if (!replay) rec.gap_cells.assign(si.size(), 0);
    if (rec.gap_cells.size() != si.size()) throw MeshError("replay recipe does not match the slit layout");
    for (size_t q = 0; q < si.size(); ++q) {
      const SI& a = si[q];
      int n = nseg[a.k];
      for (int m = 0; m <= n; ++m) {
        cs.push_back(a.lo + m * a.len / n);
        ctag.push_back({a.k, a.ds >= 0 ? m : n - m});
      }
      double next = q + 1 < si.size() ? si[q + 1].lo : si[0].lo + 1.0;
      double gap = next - (a.lo + a.len);
      if (!replay) rec.gap_cells[q] = std::max(2, static_cast<int>(std::lround(gap * rec.Ns)));
      int cnt = rec.gap_cells[q];
      if (gap * rec.Ns < 1.0) throw MeshError("slits too close together along torus " + std::to_string(j) + " for h=" + std::to_string(h));
      for (int m = 1; m < cnt; ++m) {
        cs.push_back(a.lo + a.len + m * gap / cnt);
        ctag.push_back({-1, -1});
      }
    }
  }
  const int Ncol = static_cast<int>(cs.size());
  auto vid = [&](int c, int r) { return c * Nt + r; };

  std::vector<double> tv(Ncol * Nt);
  std::vector<int> vslit(Ncol * Nt, -1), vindex(Ncol * Nt, -1);
  for (int c = 0; c < Ncol; ++c)
    for (int r = 0; r < Nt; ++r) tv[vid(c, r)] = double(r) / Nt;

  // slit vertices: column and unwrapped row for each position along each slit
  std::unordered_map<int, std::vector<int>> slit_cols;
  std::unordered_map<int, std::vector<long>> slit_rows;
  for (const SI& a : si) {
    slit_cols[a.k].assign(nseg[a.k] + 1, -1);
    slit_rows[a.k].assign(nseg[a.k] + 1, 0);
  }
  for (int c = 0; c < Ncol; ++c)
    if (ctag[c][0] >= 0) slit_cols[ctag[c][0]][ctag[c][1]] = c;
  if (!replay) rec.snap_rows.assign(si.size(), {});
  if (rec.snap_rows.size() != si.size()) throw MeshError("replay recipe does not match the slit layout");
  for (size_t q = 0; q < si.size(); ++q) {
    const SI& a = si[q];
    int n = nseg[a.k];
    if (!replay) rec.snap_rows[q].assign(n + 1, 0);
    if (static_cast<int>(rec.snap_rows[q].size()) != n + 1) throw MeshError("replay recipe does not match the slit layout");
    for (int i = 0; i <= n; ++i) {
      double tp = a.t0 + i * a.dt / n;
      if (!replay) rec.snap_rows[q][i] = std::lround(tp * Nt);
      long ks_ = rec.snap_rows[q][i];
      long r = ks_ - floor_div(ks_, Nt) * Nt;
      int id = vid(slit_cols[a.k][i], static_cast<int>(r));
      if (vslit[id] >= 0) throw MeshError("slits collide on the grid of torus " + std::to_string(j));
      vslit[id] = a.k;
      vindex[id] = i;
      tv[id] = tp - static_cast<double>(floor_div(ks_, Nt));
      slit_rows[a.k][i] = ks_;
      if (i > 0 && std::labs(ks_ - rec.snap_rows[q][i - 1]) > 1)
        throw MeshError("slit " + std::to_string(a.k) + " too steep for the grid of torus " + std::to_string(j));
    }
  }
  for (int c = 0; c < Ncol; ++c)
    for (int r = 0; r < Nt; ++r) {
      int id = vid(c, r);
      if (vslit[id] < 0) continue;
      for (int dr : {-1, 1}) {
        int o2 = vid(c, (r + dr + Nt) % Nt);
        if (vslit[o2] >= 0 && vslit[o2] != vslit[id]) throw MeshError("slits within one grid row on torus " + std::to_string(j));
      }
    }

  TorusGrid G;
  G.verts.resize(Ncol * Nt);
  for (int c = 0; c < Ncol; ++c)
    for (int r = 0; r < Nt; ++r) {
      int id = vid(c, r);
      cplx expected = o + cs[c] * f1 + tv[id] * f2;
      GridVertex& gv = G.verts[id];
      if (vslit[id] >= 0) {
        const Slit& sl = S.slits[vslit[id]];
        int n = nseg[vslit[id]], i = vindex[id];
        gv.z = i == 0 ? sl.c0 : (i == n ? sl.c1 : sl.c0 + sl.direction() * (double(i) / n));
        gv.w = round_to_lattice(expected - gv.z, f1, f2);
        gv.slit = vslit[id];
        gv.index = i;
      } else {
        gv.z = expected;
        gv.w = 0.0;
      }
    }

  // forced diagonals along the slits
  std::unordered_map<int, char> forced;
  for (const SI& a : si) {
    int n = nseg[a.k];
    for (int i = 0; i < n; ++i) {
      int ca = slit_cols[a.k][i], cb = slit_cols[a.k][i + 1];
      long ra = slit_rows[a.k][i], rb = slit_rows[a.k][i + 1];
      if ((ca + 1) % Ncol != cb) {
        std::swap(ca, cb);
        std::swap(ra, rb);
      }
      if (rb == ra) continue;
      long rl = rb == ra + 1 ? ra : rb;
      int cell = vid(ca, static_cast<int>(rl - floor_div(rl, Nt) * Nt));
      forced[cell] = rb == ra + 1 ? 0 : 1;
    }
  }
  if (!replay) rec.diagonal.assign(Ncol * Nt, 0);
  if (static_cast<int>(rec.diagonal.size()) != Ncol * Nt) throw MeshError("replay recipe does not match the grid");

  auto corner = [&](int c, int r, cplx& zc) {
    int cc = c % Ncol, rr = r % Nt;
    int id = vid(cc, rr);
    zc = G.verts[id].z + G.verts[id].w + double(c / Ncol) * f1 + double(r / Nt) * f2;
    return id;
  };
  for (int c = 0; c < Ncol; ++c)
    for (int r = 0; r < Nt; ++r) {
      cplx p00, p10, p11, p01;
      int i00 = corner(c, r, p00), i10 = corner(c + 1, r, p10), i11 = corner(c + 1, r + 1, p11), i01 = corner(c, r + 1, p01);
      int cell = vid(c, r);
      char d;
      if (auto it = forced.find(cell); it != forced.end()) {
        d = it->second;
      } else if (replay) {
        d = rec.diagonal[cell];
      } else {
        d = std::abs(p11 - p00) <= std::abs(p10 - p01) * (1 + 1e-12) ? 0 : 1;
      }
      rec.diagonal[cell] = d;
      if (d == 0) {
        G.tris.push_back({{i00, i10, i11}, {p00, p10, p11}});
        G.tris.push_back({{i00, i11, i01}, {p00, p11, p01}});
      } else {
        G.tris.push_back({{i00, i10, i01}, {p00, p10, p01}});
        G.tris.push_back({{i10, i11, i01}, {p10, p11, p01}});
      }
    }

  // put slit corners at their canonical coordinates
  for (auto& t : G.tris) {
    int sc = -1;
    for (int a = 0; a < 3; ++a)
      if (G.verts[t.lv[a]].slit >= 0) sc = a;
    if (sc < 0) continue;
    cplx shift = t.z[sc] - G.verts[t.lv[sc]].z;
    for (int a = 0; a < 3; ++a) {
      t.z[a] -= shift;
      if (G.verts[t.lv[a]].slit >= 0 && std::abs(t.z[a] - G.verts[t.lv[a]].z) > 1e-9 * h)
        throw MeshError("inconsistent slit wrap on torus " + std::to_string(j));
    }
  }
  for (const auto& t : G.tris) {
    double ar = 0.5 * (std::conj(t.z[1] - t.z[0]) * (t.z[2] - t.z[0])).imag();
    if (!(ar > 1e-6 * h * h)) throw MeshError("degenerate grid triangle on torus " + std::to_string(j));
  }
  return G;
}

}  // namespace detail

// Per-triangle audit used by the validator and tests.
struct MeshReport {
  int vertices = 0, edges = 0, triangles = 0;
  int euler = 0;
  double area = 0.0, area_error = 0.0;
  double max_edge_mismatch = 0.0;
  std::vector<double> cone_angles;
  double worst_regular_angle_sum_error = 0.0;
  double min_angle_deg = 180.0;       // over triangles away from the cones
  double min_angle_deg_all = 180.0;
  double h_min_achieved = 1e300;
};

class MeshBuilder {
 public:
  MeshBuilder(const TranslationSurface& S, const MeshParams& P) : S_(S), P_(P) {}

  SpinMesh build(const MeshRecipe* replay = nullptr) {
    if (!(P_.h > 0)) throw MeshError("mesh size h must be positive");
    if (!(P_.grading > 0 && P_.grading < 1)) throw MeshError("grading must lie in (0, 1)");
    SpinMesh M;
    M.surface = S_;
    M.params = P_;
    const bool rp = replay != nullptr;
    if (rp) M.recipe = *replay;
    MeshRecipe& R = M.recipe;
    const int ns = static_cast<int>(S_.slits.size());
    if (!rp) {
      R.slit_segments.clear();
      for (const auto& sl : S_.slits) {
        if (sl.length() < 2.0 * P_.h)
          throw MeshError("mesh resolution h=" + std::to_string(P_.h) + " too coarse for a slit of length " + std::to_string(sl.length()));
        R.slit_segments.push_back(std::max(2, static_cast<int>(std::lround(sl.length() / P_.h))));
      }
      R.tori.assign(S_.genus, {});
    }
    if (static_cast<int>(R.slit_segments.size()) != ns || static_cast<int>(R.tori.size()) != S_.genus)
      throw MeshError("replay recipe does not match the surface");

    // global vertices: cones first
    for (int k = 0; k < 2 * ns; ++k) {
      MeshVertex v;
      v.torus = S_.cones[k].tori[0];
      v.z = S_.cones[k].position;
      v.cone = k;
      v.slit = S_.cones[k].slit;
      M.vertices.push_back(v);
      M.cone_vertex.push_back(k);
    }
    // chain vertices: alpha_i then beta_i for each slit
    std::vector<std::array<std::vector<int>, 2>> chain_ids(ns);
    for (int k = 0; k < ns; ++k) {
      int n = R.slit_segments[k];
      for (int c = 0; c < 2; ++c) {
        chain_ids[k][c].assign(n + 1, -1);
        chain_ids[k][c][0] = 2 * k;
        chain_ids[k][c][n] = 2 * k + 1;
        for (int i = 1; i < n; ++i) {
          MeshVertex v;
          v.torus = S_.slits[k].torus_lo;
          v.z = S_.slits[k].c0 + S_.slits[k].direction() * (double(i) / n);
          v.slit = k;
          v.chain = c == 0 ? 1 : -1;
          chain_ids[k][c][i] = static_cast<int>(M.vertices.size());
          M.vertices.push_back(v);
        }
      }
    }
    for (int j = 0; j < S_.genus; ++j) {
      detail::TorusGrid G = detail::build_torus_grid(S_, j, P_.h, R.slit_segments, R.tori[j], rp);
      std::vector<int> gid(G.verts.size(), -1);
      for (size_t a = 0; a < G.verts.size(); ++a) {
        if (G.verts[a].slit >= 0) continue;
        MeshVertex v;
        v.torus = j;
        v.z = G.verts[a].z;
        gid[a] = static_cast<int>(M.vertices.size());
        M.vertices.push_back(v);
      }
      for (const auto& lt : G.tris) {
        MeshTriangle t;
        t.torus = j;
        t.z = lt.z;
        cplx cen = (lt.z[0] + lt.z[1] + lt.z[2]) / 3.0;
        for (int a = 0; a < 3; ++a) {
          const auto& gv = G.verts[lt.lv[a]];
          if (gv.slit < 0) {
            t.v[a] = gid[lt.lv[a]];
            continue;
          }
          const Slit& sl = S_.slits[gv.slit];
          bool above = (std::conj(sl.direction()) * (cen - lt.z[a])).imag() > 0;
          bool alpha = (j == sl.torus_lo) == above;
          t.v[a] = chain_ids[gv.slit][alpha ? 0 : 1][gv.index];
        }
        M.triangles.push_back(t);
      }
    }
    rebuild_edge_map(M);
    M.h_min = P_.h * std::pow(P_.grading, P_.rings);
    if (rp) {
      for (const auto& b : replay->bisections) bisect(M, b[0], b[1], false);
    } else {
      R.bisections.clear();
      if (!S_.cones.empty()) refine_towards_cones(M);
    }
    finalize(M);
    build_charts(M);
    return M;
  }

 private:
  const TranslationSurface& S_;
  MeshParams P_;
  std::unordered_map<std::uint64_t, std::array<int, 4>> emap_;

  void add_edges(const SpinMesh& M, int t) {
    for (int i = 0; i < 3; ++i) {
      auto key = detail::edge_key(M.triangles[t].v[i], M.triangles[t].v[(i + 1) % 3]);
      auto it = emap_.find(key);
      if (it == emap_.end()) {
        emap_.emplace(key, std::array<int, 4>{t, i, -1, -1});
      } else {
        if (it->second[2] >= 0) throw MeshError("non-manifold edge in the triangulation");
        it->second[2] = t;
        it->second[3] = i;
      }
    }
  }
  void remove_edges(const SpinMesh& M, int t) {
    for (int i = 0; i < 3; ++i) {
      auto key = detail::edge_key(M.triangles[t].v[i], M.triangles[t].v[(i + 1) % 3]);
      auto it = emap_.find(key);
      if (it == emap_.end()) continue;
      auto& e = it->second;
      if (e[0] == t && e[1] == i) {
        e[0] = e[2];
        e[1] = e[3];
        e[2] = e[3] = -1;
      } else if (e[2] == t && e[3] == i) {
        e[2] = e[3] = -1;
      }
      if (e[0] < 0) emap_.erase(it);
    }
  }
  void rebuild_edge_map(const SpinMesh& M) {
    emap_.clear();
    for (int t = 0; t < M.num_triangles(); ++t) add_edges(M, t);
    for (const auto& kv : emap_)
      if (kv.second[2] < 0) throw MeshError("open edge in the glued triangulation");
  }
  std::array<int, 2> across(const SpinMesh& M, int t, int i) const {
    auto key = detail::edge_key(M.triangles[t].v[i], M.triangles[t].v[(i + 1) % 3]);
    const auto& e = emap_.at(key);
    return e[0] == t && e[1] == i ? std::array<int, 2>{e[2], e[3]} : std::array<int, 2>{e[0], e[1]};
  }
  static int longest(const MeshTriangle& t) {
    int best = 0;
    double L = t.edge_length(0);
    for (int i = 1; i < 3; ++i) {
      double l = t.edge_length(i);
      if (l > L * (1 + 1e-12)) {
        L = l;
        best = i;
      }
    }
    return best;
  }

  void bisect(SpinMesh& M, int t, int i, bool record) {
    auto [n, k] = across(M, t, i);
    if (n < 0) throw MeshError("bisection across a missing neighbour");
    if (record) M.recipe.bisections.push_back({t, i});
    remove_edges(M, t);
    remove_edges(M, n);
    MeshTriangle T = M.triangles[t], N = M.triangles[n];
    int a = T.v[i], b = T.v[(i + 1) % 3], c = T.v[(i + 2) % 3];
    cplx za = T.z[i], zb = T.z[(i + 1) % 3], zc = T.z[(i + 2) % 3];
    int cn = N.v[(k + 2) % 3];
    cplx nb = N.z[k], na = N.z[(k + 1) % 3], zcn = N.z[(k + 2) % 3];
    MeshVertex mv;
    mv.torus = T.torus;
    mv.z = 0.5 * (za + zb);
    const MeshVertex &va = M.vertices[a], &vb = M.vertices[b];
    if (T.torus != N.torus) {
      mv.slit = va.slit >= 0 ? va.slit : vb.slit;
      mv.chain = va.chain != 0 ? va.chain : vb.chain;
    }
    int m = M.num_vertices();
    M.vertices.push_back(mv);
    cplx zm = 0.5 * (za + zb), nm = 0.5 * (na + nb);
    M.triangles[t] = {{a, m, c}, {za, zm, zc}, T.torus};
    M.triangles.push_back({{m, b, c}, {zm, zb, zc}, T.torus});
    int t2 = M.num_triangles() - 1;
    M.triangles[n] = {{b, m, cn}, {nb, nm, zcn}, N.torus};
    M.triangles.push_back({{m, a, cn}, {nm, na, zcn}, N.torus});
    int n2 = M.num_triangles() - 1;
    for (int q : {t, t2, n, n2}) add_edges(M, q);
  }

  // Longest-edge propagation: refine t by bisecting its longest edge conformingly.
  void rivara(SpinMesh& M, int t) {
    for (int guard = 0; guard < 10000; ++guard) {
      int i = longest(M.triangles[t]);
      auto [n, k] = across(M, t, i);
      if (longest(M.triangles[n]) == k) {
        bisect(M, t, i, true);
        return;
      }
      rivara(M, n);
    }
    throw MeshError("longest-edge refinement did not terminate");
  }

  double cone_distance(const SpinMesh& M, const MeshTriangle& t) const {
    double d = 1e300;
    cplx c = t.centroid();
    for (const auto& cp : S_.cones)
      if (cp.tori[0] == t.torus || cp.tori[1] == t.torus) d = std::min(d, detail::torus_distance(c, cp.position, S_.tori[t.torus]));
    return d;
  }

  void refine_towards_cones(SpinMesh& M) {
    const double kappa = 2.0 * (1.0 - P_.grading);
    auto needs = [&](int t) {
      const MeshTriangle& T = M.triangles[t];
      double L = std::max({T.edge_length(0), T.edge_length(1), T.edge_length(2)});
      return L > std::max(M.h_min, kappa * cone_distance(M, T)) * (1 + 1e-12);
    };
    for (int pass = 0; pass < 1000; ++pass) {
      bool any = false;
      for (int t = 0; t < M.num_triangles(); ++t) {
        while (needs(t)) {
          rivara(M, t);
          any = true;
        }
      }
      if (!any) return;
    }
    throw MeshError("graded refinement did not converge");
  }

  void finalize(SpinMesh& M) {
    M.edges.clear();
    M.tri_edges.assign(M.num_triangles(), {-1, -1, -1});
    std::unordered_map<std::uint64_t, int> id;
    id.reserve(M.num_triangles() * 2);
    for (int t = 0; t < M.num_triangles(); ++t)
      for (int i = 0; i < 3; ++i) {
        int a = M.triangles[t].v[i], b = M.triangles[t].v[(i + 1) % 3];
        auto key = detail::edge_key(a, b);
        auto it = id.find(key);
        if (it == id.end()) {
          MeshEdge e{std::min(a, b), std::max(a, b)};
          e.tri[0] = t;
          e.local[0] = i;
          id.emplace(key, M.num_edges());
          M.tri_edges[t][i] = M.num_edges();
          M.edges.push_back(e);
        } else {
          MeshEdge& e = M.edges[it->second];
          if (e.tri[1] >= 0) throw MeshError("edge shared by more than two triangles");
          e.tri[1] = t;
          e.local[1] = i;
          M.tri_edges[t][i] = it->second;
        }
      }
    for (auto& e : M.edges) {
      if (e.tri[1] < 0) throw MeshError("open edge in the glued triangulation");
      if (M.triangles[e.tri[0]].torus != M.triangles[e.tri[1]].torus) {
        const MeshVertex &a = M.vertices[e.v0], &b = M.vertices[e.v1];
        e.slit = a.slit >= 0 ? a.slit : b.slit;
        e.chain = a.chain != 0 ? a.chain : b.chain;
        if (e.chain == 0) throw MeshError("glued edge without a slit chain");
      }
    }
    // representative coordinates from the first referencing triangle
    std::vector<char> seen(M.num_vertices(), 0);
    for (const auto& t : M.triangles)
      for (int a = 0; a < 3; ++a)
        if (!seen[t.v[a]]) {
          seen[t.v[a]] = 1;
          M.vertices[t.v[a]].torus = t.torus;
          M.vertices[t.v[a]].z = t.z[a];
        }
  }

  void build_charts(SpinMesh& M) {
    M.charts.clear();
    for (int k = 0; k < static_cast<int>(S_.cones.size()); ++k) {
      const ConePoint& cp = S_.cones[k];
      const Slit& sl = S_.slits[cp.slit];
      ConeChart ch;
      ch.cone = k;
      ch.vertex = M.cone_vertex[k];
      double R = P_.chart_radius;
      if (R <= 0) {
        R = 0.4 * sl.length();
        for (int j : cp.tori) R = std::min(R, 0.25 * std::abs(S_.tori[j].e1));
        for (int q = 0; q < static_cast<int>(S_.slits.size()); ++q) {
          if (q == cp.slit) continue;
          for (int j : cp.tori)
            if (S_.slits[q].torus_lo == j || S_.slits[q].torus_hi == j)
              R = std::min(R, 0.45 * detail::lattice_segment_distance(S_.tori[j], cp.position, cp.position, S_.slits[q].c0, S_.slits[q].c1, false));
        }
      }
      if (R >= 0.5 * sl.length()) throw MeshError("chart radius must stay below half the slit length");
      ch.radius = R;
      const cplx ray = cp.end == 0 ? sl.direction() : -sl.direction();
      ch.theta_s = std::arg(ray);
      const int cut = cp.end == 0 ? 1 : -1;
      // root: the lower-torus triangle on the cut chain edge at the cone
      int root = -1;
      for (const auto& e : M.edges) {
        if (e.slit != cp.slit || e.chain != cut) continue;
        if (e.v0 != ch.vertex && e.v1 != ch.vertex) continue;
        for (int s = 0; s < 2; ++s)
          if (M.triangles[e.tri[s]].torus == sl.torus_lo) root = e.tri[s];
      }
      if (root < 0) throw MeshError("cone star without a cut edge");
      auto apex_of = [&](int t) {
        const auto& T = M.triangles[t];
        for (int a = 0; a < 3; ++a)
          if (T.v[a] == ch.vertex) return T.z[a];
        return cplx(std::numeric_limits<double>::quiet_NaN());
      };
      ch.tris.push_back(root);
      ch.apex.push_back(apex_of(root));
      {
        double a = std::arg(M.triangles[root].centroid() - ch.apex[0]);
        double phi = ch.theta_s + std::fmod(a - ch.theta_s + 4 * std::numbers::pi, 2 * std::numbers::pi);
        ch.phi.push_back(phi);
      }
      ch.parent.push_back(-1);
      ch.parent_edge.push_back(-1);
      ch.index[root] = 0;
      for (size_t q = 0; q < ch.tris.size(); ++q) {
        int t = ch.tris[q];
        for (int i = 0; i < 3; ++i) {
          int eid = M.tri_edges[t][i];
          const MeshEdge& e = M.edges[eid];
          if (e.slit == cp.slit && e.chain == cut) continue;
          auto [n, kk] = M.neighbor(t, i);
          if (ch.index.count(n)) continue;
          cplx P = ch.apex[q] - M.translation(t, i);
          if (detail::point_triangle_distance(P, M.triangles[n].z) > R) continue;
          double a = std::arg(M.triangles[n].centroid() - P);
          double phi = ch.phi[q] + detail::wrap_pi(a - ch.phi[q]);
          ch.index[n] = static_cast<int>(ch.tris.size());
          ch.tris.push_back(n);
          ch.apex.push_back(P);
          ch.phi.push_back(phi);
          ch.parent.push_back(static_cast<int>(q));
          ch.parent_edge.push_back(eid);
        }
      }
      for (double p : ch.phi)
        if (p < ch.theta_s - 1e-9 || p > ch.theta_s + 4 * std::numbers::pi + 1e-9)
          throw MeshError("cone chart angle escaped its range");
      M.charts.push_back(std::move(ch));
    }
  }
};

inline SpinMesh generate_mesh(const TranslationSurface& S, const MeshParams& P) { return MeshBuilder(S, P).build(); }

inline SpinMesh replay_mesh(const TranslationSurface& S, const MeshParams& P, const MeshRecipe& recipe) {
  return MeshBuilder(S, P).build(&recipe);
}

inline MeshReport validate_mesh(const SpinMesh& M) {
  MeshReport r;
  r.vertices = M.num_vertices();
  r.edges = M.num_edges();
  r.triangles = M.num_triangles();
  r.euler = r.vertices - r.edges + r.triangles;
  std::vector<double> angle_sum(M.num_vertices(), 0.0);
  const double kappa_zone = M.params.h * 2.5;
  for (int t = 0; t < M.num_triangles(); ++t) {
    const auto& T = M.triangles[t];
    double a = T.area();
    if (!(a > 0)) throw MeshError("triangle " + std::to_string(t) + " is not positively oriented");
    r.area += a;
    double mn = 180.0;
    for (int i = 0; i < 3; ++i) {
      cplx u = T.z[(i + 1) % 3] - T.z[i], w = T.z[(i + 2) % 3] - T.z[i];
      double ang = std::abs(std::arg(w / u));
      angle_sum[T.v[i]] += ang;
      mn = std::min(mn, ang * 180.0 / std::numbers::pi);
      r.h_min_achieved = std::min(r.h_min_achieved, std::abs(u));
    }
    r.min_angle_deg_all = std::min(r.min_angle_deg_all, mn);
    double dc = 1e300;
    for (const auto& cp : M.surface.cones)
      if (cp.tori[0] == T.torus || cp.tori[1] == T.torus)
        dc = std::min(dc, detail::torus_distance(T.centroid(), cp.position, M.surface.tori[T.torus]));
    if (dc > kappa_zone) r.min_angle_deg = std::min(r.min_angle_deg, mn);
  }
  for (const auto& e : M.edges) {
    const auto& A = M.triangles[e.tri[0]];
    const auto& B = M.triangles[e.tri[1]];
    cplx da = A.z[(e.local[0] + 1) % 3] - A.z[e.local[0]];
    cplx db = B.z[(e.local[1] + 1) % 3] - B.z[e.local[1]];
    r.max_edge_mismatch = std::max(r.max_edge_mismatch, std::abs(da + db));
    if (A.torus == B.torus) {
      // translation must be a lattice vector of the torus
      cplx tau = A.z[e.local[0]] - B.z[(e.local[1] + 1) % 3];
      const Torus& T = M.surface.tori[A.torus];
      auto uv = lattice_coords(tau, T.A, T.B);
      r.max_edge_mismatch = std::max(r.max_edge_mismatch, std::abs(tau - (std::round(uv[0]) * T.A + std::round(uv[1]) * T.B)));
    }
  }
  double area_ref = flat_area(M.surface);
  r.area_error = std::abs(r.area - area_ref) / area_ref;
  r.cone_angles.assign(M.cone_vertex.size(), 0.0);
  for (int v = 0; v < M.num_vertices(); ++v) {
    if (M.vertices[v].cone >= 0) {
      r.cone_angles[M.vertices[v].cone] = angle_sum[v];
    } else {
      r.worst_regular_angle_sum_error = std::max(r.worst_regular_angle_sum_error, std::abs(angle_sum[v] - 2 * std::numbers::pi));
    }
  }
  return r;
}

// Distinguished coordinate x = sqrt(2 r) e^{i Phi / 2} at cone k of a point z in triangle t.
struct OutOfChart : std::out_of_range {
  using std::out_of_range::out_of_range;
};

inline cplx chart_coordinate(const SpinMesh& M, int k, int t, cplx z) {
  const ConeChart& ch = M.charts.at(k);
  auto it = ch.index.find(t);
  if (it == ch.index.end()) throw OutOfChart("triangle outside the chart of cone " + std::to_string(k));
  cplx w = z - ch.apex[it->second];
  double r = std::abs(w);
  if (r > ch.radius) throw OutOfChart("point at distance " + std::to_string(r) + " outside the chart of cone " + std::to_string(k));
  double base = ch.phi[it->second];
  double phi = r > 0 ? base + detail::wrap_pi(std::arg(w) - base) : base;
  return std::polar(std::sqrt(2.0 * r), 0.5 * phi);
}

// Straight walk from p (inside triangle tri, in its chart) along the vector d.
// Coordinates of each step are in the chart of that step's triangle.
struct WalkStep {
  int tri;
  cplx entry, exit;
  int exit_edge;  // local edge crossed on leaving, -1 for the last step
};

struct DegenerateWalk : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::vector<WalkStep> walk_segment(const SpinMesh& M, int tri, cplx p, cplx d) {
  std::vector<WalkStep> out;
  cplx q = p, target = p + d;
  int entered = -1;
  for (int guard = 0; guard < 10 * M.num_triangles() + 100; ++guard) {
    const auto& T = M.triangles[tri];
    double best_s = 2.0;
    int best_i = -1;
    cplx seg = target - q;
    for (int i = 0; i < 3; ++i) {
      if (i == entered) continue;
      cplx a = T.z[i], b = T.z[(i + 1) % 3];
      cplx e = b - a;
      double den = (std::conj(seg) * e).imag();
      if (std::abs(den) < 1e-300) continue;
      // q + s seg = a + u e
      double s = (std::conj(a - q) * e).imag() / den;
      double u = (std::conj(a - q) * seg).imag() / den;
      if (s > 1e-14 && s <= 1.0 && u >= -1e-12 && u <= 1 + 1e-12 && s < best_s) {
        if (u < 1e-9 || u > 1 - 1e-9) throw DegenerateWalk("walk passes through a mesh vertex");
        best_s = s;
        best_i = i;
      }
    }
    if (best_i < 0) {
      out.push_back({tri, q, target, -1});
      return out;
    }
    cplx x = q + best_s * seg;
    out.push_back({tri, q, x, best_i});
    cplx tau = M.translation(tri, best_i);
    auto [n, k] = M.neighbor(tri, best_i);
    tri = n;
    entered = k;
    q = x - tau;
    target -= tau;
  }
  throw DegenerateWalk("walk did not terminate");
}

// Locate a point of torus j (any lattice representative) in the mesh.
class PointLocator {
 public:
  explicit PointLocator(const SpinMesh& M) : M_(M) {
    const int g = M.surface.genus;
    bins_.assign(g, {});
    n_.assign(g, 1);
    std::vector<int> per(g, 0);
    for (const auto& t : M.triangles) per[t.torus]++;
    for (int j = 0; j < g; ++j) {
      n_[j] = std::max(1, static_cast<int>(std::sqrt(per[j] / 4.0)));
      bins_[j].assign(n_[j] * n_[j], {});
    }
    for (int t = 0; t < M.num_triangles(); ++t) {
      const auto& T = M.triangles[t];
      const Torus& tor = M.surface.tori[T.torus];
      double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
      for (const auto& z : T.z) {
        auto uv = lattice_coords(z, tor.e1, tor.e2);
        umin = std::min(umin, uv[0]);
        umax = std::max(umax, uv[0]);
        vmin = std::min(vmin, uv[1]);
        vmax = std::max(vmax, uv[1]);
      }
      const int n = n_[T.torus];
      for (long a = static_cast<long>(std::floor(umin * n)); a <= static_cast<long>(std::floor(umax * n)); ++a)
        for (long b = static_cast<long>(std::floor(vmin * n)); b <= static_cast<long>(std::floor(vmax * n)); ++b) {
          long aa = ((a % n) + n) % n, bb = ((b % n) + n) % n;
          bins_[T.torus][aa * n + bb].push_back(t);
        }
    }
  }

  // Returns triangle index and the coordinate of the point in that triangle's chart.
  std::pair<int, cplx> locate(int j, cplx z) const {
    const Torus& tor = M_.surface.tori[j];
    auto uv = lattice_coords(z, tor.e1, tor.e2);
    const int n = n_[j];
    long a = static_cast<long>(std::floor(uv[0] * n)), b = static_cast<long>(std::floor(uv[1] * n));
    long aa = ((a % n) + n) % n, bb = ((b % n) + n) % n;
    int best = -1;
    double bestd = 1e300;
    cplx bestz;
    for (int t : bins_[j][aa * n + bb]) {
      const auto& T = M_.triangles[t];
      cplx c = T.centroid();
      cplx zz = z + detail::round_to_lattice(c - z, tor.e1, tor.e2);
      double d = detail::point_triangle_distance(zz, T.z);
      if (d < bestd) {
        bestd = d;
        best = t;
        bestz = zz;
      }
    }
    if (best < 0 || bestd > 1e-9) throw std::out_of_range("point not found on torus " + std::to_string(j));
    return {best, bestz};
  }

 private:
  const SpinMesh& M_;
  std::vector<std::vector<std::vector<int>>> bins_;
  std::vector<int> n_;
};

}  // namespace spinlap
