// Spin structures as automorphy signs, and their lift to sign data on a mesh.
//
// On torus j, sigma_a[j] (sigma_b[j]) is the factor picked up by the z-frame
// spinor under z -> z + A_j (z -> z + B_j). Across the glued slit banks the
// frame flips on the alpha chain and is kept on the beta chain, which makes
// every cone loop antiperiodic.
#pragma once

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "spinlap/mesh.hpp"
#include "spinlap/theta.hpp"

namespace spinlap {

struct LiftFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SpinStructure {
  int genus = 1;
  std::vector<int> sigma_a, sigma_b;
  ThetaChar characteristic;
  bool calibrated = false;

  bool even() const { return characteristic.even(); }
  std::string parity() const { return even() ? "even" : "odd"; }
  std::string signs_label() const {
    std::string s;
    for (int j = 0; j < genus; ++j) s += std::string(j ? "," : "") + (sigma_a[j] > 0 ? "+" : "-") + (sigma_b[j] > 0 ? "+" : "-");
    return s;
  }
};

// Provisional dictionary: p_j = 1/2 iff periodic along a_j, q_j = 1/2 iff periodic along b_j.
inline ThetaChar provisional_characteristic(const std::vector<int>& sa, const std::vector<int>& sb) {
  ThetaChar c;
  for (size_t j = 0; j < sa.size(); ++j) {
    c.p.push_back(sa[j] > 0 ? 0.5 : 0.0);
    c.q.push_back(sb[j] > 0 ? 0.5 : 0.0);
  }
  return c;
}

// Arf invariant of the quadratic form given by the signs on the a/b basis.
inline int arf_parity(const std::vector<int>& sa, const std::vector<int>& sb) {
  int s = 0;
  for (size_t j = 0; j < sa.size(); ++j) s += (sa[j] > 0 && sb[j] > 0);
  return s % 2;
}

inline SpinStructure make_spin_structure(std::vector<int> sa, std::vector<int> sb) {
  if (sa.size() != sb.size() || sa.empty()) throw std::invalid_argument("sign vectors must have genus length");
  for (size_t j = 0; j < sa.size(); ++j)
    if (std::abs(sa[j]) != 1 || std::abs(sb[j]) != 1) throw std::invalid_argument("automorphy signs must be +1 or -1");
  SpinStructure s;
  s.genus = static_cast<int>(sa.size());
  s.characteristic = provisional_characteristic(sa, sb);
  s.sigma_a = std::move(sa);
  s.sigma_b = std::move(sb);
  return s;
}

inline std::vector<SpinStructure> enumerate_spin_structures(int g) {
  if (g < 1) throw std::invalid_argument("genus must be >= 1");
  std::vector<SpinStructure> out;
  for (int mask = 0; mask < (1 << (2 * g)); ++mask) {
    std::vector<int> sa(g), sb(g);
    for (int j = 0; j < g; ++j) {
      sa[j] = (mask >> (2 * j)) & 1 ? 1 : -1;
      sb[j] = (mask >> (2 * j + 1)) & 1 ? 1 : -1;
    }
    out.push_back(make_spin_structure(sa, sb));
  }
  return out;
}

// P2 degrees of freedom: vertices first (cones removed for spinors), then edges.
// The value of dof d seen from triangle t is sign[t][l] * U_d (+ offset for cocycles).
struct DofMap {
  int num_dofs = 0;
  int num_vertex_dofs = 0;
  std::vector<int> vertex_dof;  // -1 if removed
  std::vector<int> edge_dof;
  std::vector<std::array<int, 6>> dof;          // -1 if removed
  std::vector<std::array<signed char, 6>> sign;  // 0 if removed
};

struct SignLift {
  std::vector<int> edge_sign;  // frame factor across each mesh edge
  std::vector<int> cut_set;    // edges with a lattice translation or a slit glueing
  std::vector<std::vector<int>> chart_sign;  // per cone, per chart triangle
  DofMap dofs;
};

namespace detail {

inline int edge_transition(const SpinMesh& M, const SpinStructure& s, int eid) {
  const MeshEdge& e = M.edges[eid];
  int t = e.tri[0];
  if (e.chain != 0) return e.chain > 0 ? -1 : 1;
  const Torus& T = M.surface.tori[M.triangles[t].torus];
  auto mn = T.user_counts(M.translation(t, e.local[0]));
  int tor = M.triangles[t].torus;
  int f = 1;
  if (mn[0] & 1) f *= s.sigma_a[tor];
  if (mn[1] & 1) f *= s.sigma_b[tor];
  return f;
}

// Incident (triangle, corner) pairs of every vertex.
inline std::vector<std::vector<std::array<int, 2>>> vertex_stars(const SpinMesh& M) {
  std::vector<std::vector<std::array<int, 2>>> star(M.num_vertices());
  for (int t = 0; t < M.num_triangles(); ++t)
    for (int a = 0; a < 3; ++a) star[M.triangles[t].v[a]].push_back({t, a});
  return star;
}

// Propagate a sign around the star of v; returns the holonomy (+1 consistent, -1 antiperiodic)
// and writes the per-corner signs.
inline int propagate_star(const SpinMesh& M, const std::vector<int>& esign, const std::vector<std::array<int, 2>>& star,
                          std::vector<int>& corner_sign) {
  corner_sign.assign(star.size(), 0);
  if (star.empty()) return 1;
  int hol = 1;
  std::vector<int> queue{0};
  corner_sign[0] = 1;
  auto find = [&](int t) {
    for (size_t q = 0; q < star.size(); ++q)
      if (star[q][0] == t) return static_cast<int>(q);
    return -1;
  };
  for (size_t h = 0; h < queue.size(); ++h) {
    int q = queue[h];
    int t = star[q][0], a = star[q][1];
    for (int i : {a, (a + 2) % 3}) {
      auto nb = M.neighbor(t, i);
      int r = find(nb[0]);
      if (r < 0) throw LiftFailure("vertex star is not closed");
      int s = esign[M.tri_edges[t][i]] * corner_sign[q];
      if (corner_sign[r] == 0) {
        corner_sign[r] = s;
        queue.push_back(r);
      } else if (corner_sign[r] != s) {
        hol = -1;
      }
    }
  }
  return hol;
}

}  // namespace detail

// Scalar P2 map with every vertex kept and trivial signs.
inline DofMap scalar_dof_map(const SpinMesh& M) {
  DofMap D;
  D.vertex_dof.resize(M.num_vertices());
  for (int v = 0; v < M.num_vertices(); ++v) D.vertex_dof[v] = v;
  D.num_vertex_dofs = M.num_vertices();
  D.edge_dof.resize(M.num_edges());
  for (int e = 0; e < M.num_edges(); ++e) D.edge_dof[e] = M.num_vertices() + e;
  D.num_dofs = M.num_vertices() + M.num_edges();
  D.dof.resize(M.num_triangles());
  D.sign.resize(M.num_triangles());
  for (int t = 0; t < M.num_triangles(); ++t)
    for (int l = 0; l < 3; ++l) {
      D.dof[t][l] = M.triangles[t].v[l];
      D.dof[t][3 + l] = D.edge_dof[M.tri_edges[t][l]];
      D.sign[t][l] = D.sign[t][3 + l] = 1;
    }
  return D;
}

inline SignLift build_sign_lift(const SpinMesh& M, const SpinStructure& s) {
  if (s.genus != M.surface.genus) throw std::invalid_argument("spin structure genus does not match the surface");
  SignLift L;
  L.edge_sign.resize(M.num_edges());
  for (int e = 0; e < M.num_edges(); ++e) {
    L.edge_sign[e] = detail::edge_transition(M, s, e);
    const MeshEdge& E = M.edges[e];
    if (E.chain != 0 || std::abs(M.translation(E.tri[0], E.local[0])) > 1e-12) L.cut_set.push_back(e);
  }
  DofMap& D = L.dofs;
  D.vertex_dof.assign(M.num_vertices(), -1);
  D.dof.assign(M.num_triangles(), {-1, -1, -1, -1, -1, -1});
  D.sign.assign(M.num_triangles(), {0, 0, 0, 0, 0, 0});
  auto stars = detail::vertex_stars(M);
  int next = 0;
  std::vector<int> cs;
  for (int v = 0; v < M.num_vertices(); ++v) {
    int hol = detail::propagate_star(M, L.edge_sign, stars[v], cs);
    bool cone = M.vertices[v].cone >= 0;
    if (cone) {
      if (hol != -1) throw LiftFailure("cone " + std::to_string(M.vertices[v].cone) + " is not antiperiodic");
      continue;
    }
    if (hol != 1) throw LiftFailure("sign cocycle is inconsistent around vertex " + std::to_string(v));
    D.vertex_dof[v] = next++;
    for (size_t q = 0; q < stars[v].size(); ++q) {
      auto [t, a] = stars[v][q];
      D.dof[t][a] = D.vertex_dof[v];
      D.sign[t][a] = static_cast<signed char>(cs[q]);
    }
  }
  D.num_vertex_dofs = next;
  D.edge_dof.resize(M.num_edges());
  for (int e = 0; e < M.num_edges(); ++e) {
    const MeshEdge& E = M.edges[e];
    D.edge_dof[e] = next++;
    D.dof[E.tri[0]][3 + E.local[0]] = D.edge_dof[e];
    D.sign[E.tri[0]][3 + E.local[0]] = 1;
    D.dof[E.tri[1]][3 + E.local[1]] = D.edge_dof[e];
    D.sign[E.tri[1]][3 + E.local[1]] = static_cast<signed char>(L.edge_sign[e]);
  }
  D.num_dofs = next;
  for (const auto& ch : M.charts) {
    std::vector<int> sg(ch.tris.size(), 0);
    sg[0] = 1;
    for (size_t q = 1; q < ch.tris.size(); ++q) sg[q] = L.edge_sign[ch.parent_edge[q]] * sg[ch.parent[q]];
    L.chart_sign.push_back(std::move(sg));
  }
  return L;
}

// Product of frame factors around the star of every vertex.
inline std::vector<int> star_holonomies(const SpinMesh& M, const SignLift& L) {
  auto stars = detail::vertex_stars(M);
  std::vector<int> out(M.num_vertices()), cs;
  for (int v = 0; v < M.num_vertices(); ++v) out[v] = detail::propagate_star(M, L.edge_sign, stars[v], cs);
  return out;
}

// Product over the edges leaving a vertex set: the holonomy of the dual boundary loops.
inline int cut_holonomy(const SpinMesh& M, const SignLift& L, const std::unordered_set<int>& verts) {
  int p = 1;
  for (int e = 0; e < M.num_edges(); ++e)
    if (verts.count(M.edges[e].v0) != verts.count(M.edges[e].v1)) p *= L.edge_sign[e];
  return p;
}

// Random connected vertex sets grown by breadth-first search.
inline std::vector<std::unordered_set<int>> random_vertex_patches(const SpinMesh& M, int count, int max_size, std::uint64_t seed) {
  std::vector<std::vector<int>> adj(M.num_vertices());
  for (const auto& e : M.edges) {
    adj[e.v0].push_back(e.v1);
    adj[e.v1].push_back(e.v0);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::unordered_set<int>> out;
  for (int c = 0; c < count; ++c) {
    int size = 1 + static_cast<int>(rng() % max_size);
    std::unordered_set<int> set;
    std::vector<int> frontier{static_cast<int>(rng() % M.num_vertices())};
    set.insert(frontier[0]);
    while (static_cast<int>(set.size()) < size && !frontier.empty()) {
      size_t pick = rng() % frontier.size();
      int v = frontier[pick];
      bool grew = false;
      for (int w : adj[v])
        if (!set.count(w)) {
          set.insert(w);
          frontier.push_back(w);
          grew = true;
          break;
        }
      if (!grew) frontier.erase(frontier.begin() + pick);
    }
    out.push_back(std::move(set));
  }
  return out;
}

// A base point on torus j whose straight A_j (or B_j) loop avoids every slit by `margin`.
inline cplx clear_base_point(const SpinMesh& M, int j, cplx dir, double margin) {
  const Torus& T = M.surface.tori[j];
  for (double u : {0.137, 0.371, 0.613, 0.859, 0.253, 0.747})
    for (double v : {0.119, 0.383, 0.641, 0.877, 0.27, 0.73}) {
      cplx p = u * T.A + v * T.B;
      bool ok = true;
      for (const auto& sl : M.surface.slits) {
        if (sl.torus_lo != j && sl.torus_hi != j) continue;
        if (detail::lattice_segment_distance(T, p, p + dir, sl.c0, sl.c1, false) < margin) ok = false;
      }
      if (ok) return p;
    }
  throw std::runtime_error("no slit-free straight cycle found on torus " + std::to_string(j));
}

// Frame holonomy along the straight cycle p -> p + A_j (which = 'a') or p -> p + B_j.
inline int cycle_holonomy(const SpinMesh& M, const SignLift& L, const PointLocator& loc, int j, char which) {
  const Torus& T = M.surface.tori[j];
  cplx dir = which == 'a' ? T.A : T.B;
  cplx p = clear_base_point(M, j, dir, 2.0 * M.params.h);
  for (int attempt = 0; attempt < 8; ++attempt) {
    try {
      auto [t, z] = loc.locate(j, p + cplx(1e-7 * attempt, 3e-7 * attempt));
      auto steps = walk_segment(M, t, z, dir);
      int prod = 1;
      for (const auto& st : steps)
        if (st.exit_edge >= 0) prod *= L.edge_sign[M.tri_edges[st.tri][st.exit_edge]];
      if (steps.back().tri != t) throw DegenerateWalk("cycle did not close on its start triangle");
      return prod;
    } catch (const DegenerateWalk&) {
    }
  }
  throw std::runtime_error("could not trace a straight cycle on torus " + std::to_string(j));
}

}  // namespace spinlap
