#pragma once

// JSON/CSV artifacts of the pipeline. Complex numbers are [re, im] everywhere.

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinlap/determinants.hpp"

namespace spinlap::io {

using json = nlohmann::json;

inline constexpr const char* kSchema = "spinlap-report/1";

#ifdef SPINLAP_VERSION
inline constexpr const char* kVersion = SPINLAP_VERSION;
#else
inline constexpr const char* kVersion = "0.0.0";
#endif

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline json to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline cplx complex_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) throw ConfigError("expected [re, im], got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json to_json(const std::vector<cplx>& v) {
  json a = json::array();
  for (cplx z : v) a.push_back(to_json(z));
  return a;
}

inline json to_json(const Eigen::VectorXcd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(to_json(v[i]));
  return a;
}

inline json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json to_json(const Eigen::MatrixXcd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(to_json(m(i, j)));
    rows.push_back(r);
  }
  return rows;
}

inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline std::string sha256_hex(const std::string& s) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(s.data(), s.size(), md, &len, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 failed");
  std::ostringstream o;
  for (unsigned int i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return o.str();
}

// nlohmann::json keeps object keys sorted, so dump() is canonical
inline std::string config_hash(const json& config) { return sha256_hex(config.dump()); }

// ---------------------------------------------------------------- moduli

inline ModuliPoint moduli_from_json(const json& j) {
  ModuliPoint m;
  try {
    m.genus = j.at("genus").get<int>();
    for (const auto& z : j.at("A")) m.A.push_back(complex_from(z));
    for (const auto& z : j.at("B")) m.B.push_back(complex_from(z));
    if (j.contains("C"))
      for (const auto& z : j.at("C")) m.C.push_back(complex_from(z));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("moduli: ") + e.what());
  }
  if (m.genus < 1) throw ConfigError("moduli: genus must be positive");
  if (static_cast<int>(m.A.size()) != m.genus || static_cast<int>(m.B.size()) != m.genus)
    throw ConfigError("moduli: A and B need one entry per torus");
  if (static_cast<int>(m.C.size()) != 2 * m.genus - 2) throw ConfigError("moduli: C needs 2g - 2 slit endpoints");
  return m;
}

inline json to_json(const ModuliPoint& m) { return {{"genus", m.genus}, {"A", to_json(m.A)}, {"B", to_json(m.B)}, {"C", to_json(m.C)}}; }

// A JSON object given inline or the path of a file holding one.
inline json load_json_arg(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\n");
  try {
    if (first != std::string::npos && arg[first] == '{') return json::parse(arg);
    std::ifstream in(arg);
    if (!in) throw ConfigError("cannot read " + arg);
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("parse error in " + arg + ": " + e.what());
  }
}

inline ModuliPoint load_moduli(const std::string& arg) { return moduli_from_json(load_json_arg(arg)); }

// ---------------------------------------------------------------- spin selection

inline std::string signs_compact(const SpinStructure& s) {
  std::string out;
  for (int j = 0; j < s.genus; ++j) out += std::string(s.sigma_a[j] > 0 ? "+" : "-") + (s.sigma_b[j] > 0 ? "+" : "-");
  return out;
}

// Items: "even:k" / "odd:k" (k-th structure of that Arf parity in enumeration order),
// "k" or "index:k", "signs:+-++" (sigma_a0 sigma_b0 sigma_a1 ...), "all-even", "all".
inline std::vector<SpinStructure> parse_spins(const std::string& list, int g) {
  const std::vector<SpinStructure> all = enumerate_spin_structures(g);
  std::vector<SpinStructure> even, odd;
  for (const auto& s : all) (arf_parity(s.sigma_a, s.sigma_b) == 0 ? even : odd).push_back(s);
  auto index = [](const std::string& s, size_t n, const std::string& item) {
    size_t pos = 0;
    long k = -1;
    try {
      k = std::stol(s, &pos);
    } catch (const std::exception&) {
    }
    if (pos != s.size() || k < 0 || static_cast<size_t>(k) >= n) throw ConfigError("spin item '" + item + "' is out of range (" + std::to_string(n) + " available)");
    return static_cast<size_t>(k);
  };
  std::vector<SpinStructure> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "all-even") {
      out.insert(out.end(), even.begin(), even.end());
    } else if (item == "all") {
      out.insert(out.end(), all.begin(), all.end());
    } else if (item.rfind("even:", 0) == 0) {
      out.push_back(even[index(item.substr(5), even.size(), item)]);
    } else if (item.rfind("odd:", 0) == 0) {
      out.push_back(odd[index(item.substr(4), odd.size(), item)]);
    } else if (item.rfind("index:", 0) == 0) {
      out.push_back(all[index(item.substr(6), all.size(), item)]);
    } else if (item.rfind("signs:", 0) == 0) {
      std::string s = item.substr(6);
      if (static_cast<int>(s.size()) != 2 * g || s.find_first_not_of("+-") != std::string::npos)
        throw ConfigError("spin item '" + item + "' needs " + std::to_string(2 * g) + " signs");
      std::vector<int> sa(g), sb(g);
      for (int j = 0; j < g; ++j) sa[j] = s[2 * j] == '+' ? 1 : -1, sb[j] = s[2 * j + 1] == '+' ? 1 : -1;
      out.push_back(make_spin_structure(sa, sb));
    } else {
      out.push_back(all[index(item, all.size(), item)]);
    }
  }
  if (out.empty()) throw ConfigError("empty spin selection");
  return out;
}

inline json to_json(const ThetaChar& c) { return {{"p", c.p}, {"q", c.q}, {"label", c.label()}, {"parity", c.even() ? "even" : "odd"}}; }

inline json to_json(const SpinStructure& s) {
  json j = {{"signs", signs_compact(s)}, {"sigma_a", s.sigma_a}, {"sigma_b", s.sigma_b}, {"arf_parity", arf_parity(s.sigma_a, s.sigma_b) ? "odd" : "even"},
            {"calibrated", s.calibrated}};
  if (s.calibrated) j["characteristic"] = to_json(s.characteristic);
  return j;
}

// ---------------------------------------------------------------- surface, periods

inline json mesh_params_json(const MeshParams& p) {
  return {{"h", p.h}, {"grading", p.grading}, {"rings", p.rings}, {"chart_radius", p.chart_radius}};
}

inline json surface_json(const SpinMesh& M) {
  const TranslationSurface& S = M.surface;
  json j = to_json(S.moduli);
  json verts = json::array(), vt = json::array(), tris = json::array(), cones = json::array();
  for (const auto& v : M.vertices) {
    verts.push_back(to_json(v.z));
    vt.push_back(v.torus);
  }
  for (const auto& t : M.triangles) tris.push_back({t.v[0], t.v[1], t.v[2]});
  for (size_t k = 0; k < S.cones.size(); ++k) {
    const ConePoint& c = S.cones[k];
    cones.push_back({{"position", to_json(c.position)}, {"tori", {c.tori[0], c.tori[1]}}, {"angle", c.angle}, {"slit", c.slit},
                     {"vertex", k < M.cone_vertex.size() ? M.cone_vertex[k] : -1}});
  }
  json slits = json::array();
  for (const auto& s : S.slits) slits.push_back({{"c0", to_json(s.c0)}, {"c1", to_json(s.c1)}, {"tori", {s.torus_lo, s.torus_hi}}});
  j["vertices"] = verts;
  j["vertex_torus"] = vt;
  j["triangles"] = tris;
  j["cone_points"] = cones;
  j["slits"] = slits;
  j["flat_area"] = flat_area(S);
  j["moduli_area"] = moduli_area(S.moduli);
  j["mesh"] = mesh_params_json(M.params);
  j["mesh"]["h_min"] = M.h_min;
  j["mesh"]["num_triangles"] = M.num_triangles();
  j["mesh"]["num_vertices"] = M.num_vertices();
  return j;
}

inline json periods_json(const PeriodData& P) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P.B_matrix.imag());
  return {{"B", to_json(P.B_matrix)},
          {"residual", P.residual},
          {"symmetry_defect", P.symmetry_defect},
          {"imag_min_eigenvalue", es.eigenvalues().minCoeff()}};
}

// ---------------------------------------------------------------- spectra, determinants

inline json spectral_determinant_json(const SpectralDeterminant& d) {
  return {{"extension", extension_name(d.extension)},
          {"log_det", d.log_det},
          {"err", d.err},
          {"c0", d.c0},
          {"c0_fit", d.fit.c0},
          {"c0_fit_spread", d.fit.spread},
          {"heat_window", {d.fit.t_lo, d.fit.t_hi}},
          {"num_eigs", d.eigenvalues.size()},
          {"lambda_1", d.eigenvalues.size() ? d.eigenvalues[0] : 0.0}};
}

inline json scattering_json(const ScatteringData& d) {
  return {{"T0", to_json(d.T0)},
          {"quadrature_error", to_json(d.quadrature_error)},
          {"det_T0", to_json(d.detT0)},
          {"S_gram", to_json(d.S_gram)},
          {"hermiticity_defect", d.hermiticity_defect},
          {"min_eigenvalue", d.min_eigenvalue},
          {"diag_direct", to_json(d.diag_direct)},
          {"residue_defect", to_json(d.residue_defect)}};
}

inline json report_json(const DeterminantReport& r) {
  return {{"g", r.g},
          {"spin", to_json(r.spin)},
          {"log_det_F", r.log_det_F},
          {"log_det_F_err", r.log_det_F_err},
          {"log_det_T0", r.log_detT0},
          {"log_det_T0_err", r.log_detT0_err},
          {"theta_constant", r.theta_constant},
          {"log_det_S", r.log_det_S},
          {"log_det_S_err", r.log_det_S_err},
          {"Q", r.Q},
          {"Q_err", r.Q_err},
          {"ratio_closed", r.ratio_closed},
          {"ratio_formula", r.ratio_formula},
          {"error_budget", {{"regularization_and_truncation", r.log_det_F_err}, {"T0_quadrature", r.log_detT0_err}}},
          {"scattering", scattering_json(r.scattering)},
          {"tau_B", r.tau_placeholder}};
}

// Envelope shared by every JSON artifact.
inline json envelope(const std::string& command, const json& config) {
  json modules;
  for (const char* m : {"surface", "homology_spin", "hodge", "theta", "cone_analysis", "spectral", "determinants", "cli"}) modules[m] = kVersion;
  return {{"schema", kSchema}, {"command", command}, {"version", kVersion}, {"modules", modules}, {"config", config},
          {"config_hash", config_hash(config)}};
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// shortest round-trip decimal; locale independent
inline std::string fmt(double x) {
  if (!std::isfinite(x)) return x != x ? "nan" : (x > 0 ? "inf" : "-inf");
  return json(x).dump();
}

}  // namespace spinlap::io
