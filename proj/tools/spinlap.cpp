// spinlap: command-line runner for the spinor-Laplacian pipeline.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "spinlap/io.hpp"

using namespace spinlap;
using io::json;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 1, kPipeline = 2, kInvariant = 3 };

// module currently running, for diagnostics
std::string g_stage = "cli";

struct StageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void stage(const std::string& s) { g_stage = s; }

void log(const std::string& msg) { std::cerr << "spinlap: " << msg << std::endl; }

class Timer {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Output {
  std::string dir = ".";
  void prepare() const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    fs::path probe = fs::path(dir) / ".spinlap_write_probe";
    try {
      if (ec) throw std::runtime_error(ec.message());
      io::write_text(probe.string(), "");
    } catch (const std::exception& e) {
      throw io::ConfigError("output directory " + dir + " is not writable (" + e.what() + ")");
    }
    fs::remove(probe, ec);
  }
  std::string path(const std::string& name) const { return (fs::path(dir) / name).string(); }
};

struct MeshOptions {
  std::string moduli;
  double h = 0.05;
  double grading = 0.7;
  int rings = 40;
  bool refine_cones = false;  // scale the cone grading with h

  MeshParams params() const {
    MeshParams p = refine_cones ? refinement_family(h) : MeshParams{};
    p.h = h;
    if (!refine_cones) p.grading = grading, p.rings = rings;
    return p;
  }
  json config() const { return {{"moduli", moduli_json}, {"h", h}, {"grading", grading}, {"rings", rings}, {"refine_cones", refine_cones}}; }
  void check() const {
    if (!(h > 0) || !(grading > 0 && grading < 1) || rings < 0) throw io::ConfigError("mesh parameters must be positive (0 < grading < 1)");
  }
  json moduli_json;
};

void add_mesh_options(CLI::App* c, MeshOptions& m) {
  c->add_option("--moduli", m.moduli, "moduli file (JSON) or inline JSON object")->required();
  c->add_option("--h", m.h, "bulk mesh size")->capture_default_str();
  c->add_option("--grading", m.grading, "ring ratio towards the cones")->capture_default_str();
  c->add_option("--rings", m.rings, "graded rings")->capture_default_str();
  c->add_flag("--refine-cones", m.refine_cones, "refine the cone zones together with h");
}

void add_output(CLI::App* c, Output& o) { c->add_option("--out", o.dir, "output directory")->capture_default_str(); }

struct Pipeline {
  ModuliPoint moduli;
  std::optional<SpinMesh> mesh;
  std::optional<PeriodData> periods;
  std::optional<ThetaSurface> theta;
};

void load(Pipeline& p, MeshOptions& m) {
  stage("surface");
  m.check();
  json mj = io::load_json_arg(m.moduli);
  p.moduli = io::moduli_from_json(mj);
  m.moduli_json = io::to_json(p.moduli);
  Timer t;
  TranslationSurface S = build_surface(p.moduli);
  p.mesh.emplace(generate_mesh(S, m.params()));
  log("mesh: " + std::to_string(p.mesh->num_triangles()) + " triangles (" + io::fmt(t.seconds()) + " s)");
}

void periods(Pipeline& p) {
  stage("hodge");
  Timer t;
  p.periods.emplace(period_matrix(*p.mesh));
  log("periods (" + io::fmt(t.seconds()) + " s)");
  stage("theta");
  p.theta.emplace(make_theta_surface(*p.periods));
}

// ---------------------------------------------------------------- surface

int run_surface(MeshOptions& m, const Output& out) {
  Pipeline p;
  load(p, m);
  stage("surface");
  MeshReport r = validate_mesh(*p.mesh);
  json j = io::envelope("surface", m.config());
  j["surface"] = io::surface_json(*p.mesh);
  const double area_identity = std::abs(flat_area(p.mesh->surface) - moduli_area(p.moduli));
  j["checks"] = {{"euler_characteristic", r.euler},
                 {"expected_euler", 2 - 2 * p.moduli.genus},
                 {"mesh_area_error", r.area_error},
                 {"area_identity_defect", area_identity},
                 {"max_edge_mismatch", r.max_edge_mismatch},
                 {"min_angle_deg", r.min_angle_deg}};
  io::write_json(out.path("surface.json"), j);
  if (r.euler != 2 - 2 * p.moduli.genus || area_identity > 1e-12 * flat_area(p.mesh->surface)) {
    log("[surface] invariant violated: Euler characteristic or area identity");
    return kInvariant;
  }
  return kOk;
}

// ---------------------------------------------------------------- periods

int run_periods(MeshOptions& m, const Output& out) {
  Pipeline p;
  load(p, m);
  periods(p);
  json j = io::envelope("periods", m.config());
  j["periods"] = io::periods_json(*p.periods);
  io::write_json(out.path("periods.json"), j);
  if (j["periods"]["imag_min_eigenvalue"].get<double>() <= 0 || p.periods->symmetry_defect > 1e-6) {
    log("[hodge] invariant violated: B is not in the Siegel half space");
    return kInvariant;
  }
  return kOk;
}

// ---------------------------------------------------------------- self tests

int run_theta_selftest(int g, int points, std::uint64_t seed, double tol, const Output& out) {
  stage("theta");
  if (g < 1 || points < 1 || !(tol > 0)) throw io::ConfigError("--g and --points must be positive");
  auto rows = theta_selftest(g, points, seed);
  std::string csv = "g,char,test,residual\n";
  double worst = 0;
  for (const auto& r : rows) {
    csv += std::to_string(r.g) + "," + r.characteristic + "," + r.test + "," + io::fmt(r.residual) + "\n";
    worst = std::max(worst, r.residual);
  }
  io::write_text(out.path("theta_selftest.csv"), csv);
  log("theta self-test: max residual " + io::fmt(worst));
  return worst < tol ? kOk : kInvariant;
}

int run_cone_selftest(double tol, double trace_tol, const Output& out) {
  stage("cone_analysis");
  auto rows = cone_selftest();
  std::string csv = "test_id,alpha,t,value_route1,value_route2,abs_diff\n";
  bool ok = true;
  double worst = 0;
  for (const auto& r : rows) {
    csv += r.test + "," + io::fmt(r.alpha) + "," + io::fmt(r.t) + "," + io::fmt(r.value_route1) + "," + io::fmt(r.value_route2) + "," + io::fmt(r.abs_diff) +
           "\n";
    // trace constants come from a numerical t -> 0 extrapolation and carry their own tolerance
    const bool trace = r.test.rfind("trace_constant", 0) == 0;
    if (!trace) worst = std::max(worst, r.abs_diff);
    ok = ok && r.abs_diff < (trace ? trace_tol : tol);
  }
  io::write_text(out.path("cone_selftest.csv"), csv);
  log("cone self-test: max dual-route difference " + io::fmt(worst));
  return ok ? kOk : kInvariant;
}

// ---------------------------------------------------------------- spectrum

struct SpectrumOptions {
  std::string spin = "even:0";
  std::string extension = "friedrichs";
  int num_eigs = 200;
  int t_count = 24;
  double t_min = 0, t_max = 0;  // 0: from the fit window
};

int run_spectrum(MeshOptions& m, const SpectrumOptions& o, std::uint64_t seed, const Output& out) {
  if (o.num_eigs < 10 || o.t_count < 2) throw io::ConfigError("--num-eigs >= 10 and --t-count >= 2 required");
  Extension ext;
  try {
    ext = parse_extension(o.extension);
  } catch (const std::invalid_argument& e) {
    throw io::ConfigError(e.what());
  }
  Pipeline p;
  load(p, m);
  stage("homology_spin");
  auto spins = io::parse_spins(o.spin, p.moduli.genus);
  if (spins.size() != 1) throw io::ConfigError("--spin selects exactly one structure");
  SpinStructure s = spins[0];
  if (p.moduli.genus > 1 || ext != Extension::Friedrichs) {
    periods(p);
    stage("theta");
    s = calibrate(s, *p.theta);
  }
  stage("spectral");
  Timer t;
  SignLift L = build_sign_lift(*p.mesh, s);
  DiscreteOperator op = assemble_operator(*p.mesh, L, {ext});
  EigOptions eo;
  eo.seed = seed;
  SpectrumResult r = compute_spectrum(op, o.num_eigs, false, eo);
  log("spectrum: " + std::to_string(r.eigenvalues.size()) + " eigenvalues (" + io::fmt(t.seconds()) + " s)");
  const double area = flat_area(p.mesh->surface);
  const int g = p.moduli.genus;

  json cfg = m.config();
  cfg["spin"] = o.spin;
  cfg["extension"] = extension_name(ext);
  cfg["num_eigs"] = o.num_eigs;
  cfg["t_count"] = o.t_count;
  cfg["t_min"] = o.t_min;
  cfg["t_max"] = o.t_max;
  cfg["seed"] = seed;
  json j = io::envelope("spectrum", cfg);
  j["moduli"] = io::to_json(p.moduli);
  j["spin"] = io::to_json(s);
  j["extension"] = extension_name(ext);
  j["h"] = m.h;
  j["eigenvalues"] = io::to_json(r.eigenvalues);
  j["residuals"] = io::to_json(r.residuals);

  // zero modes: the periodic torus structure and the holomorphic kernel
  const double lmax = r.eigenvalues.maxCoeff();
  int zero = 0;
  const double gap = ext == Extension::Holomorphic ? 0.05 * r.eigenvalues[std::min<Eigen::Index>(2 * g, r.eigenvalues.size() - 1)] : 1e-8 * lmax;
  while (zero < r.eigenvalues.size() && r.eigenvalues[zero] < gap) ++zero;
  j["zero_modes"] = zero;
  Eigen::VectorXd pos = r.eigenvalues.tail(r.eigenvalues.size() - zero);

  auto [wlo, whi] = default_heat_window(r.eigenvalues, area);
  const double tlo = o.t_min > 0 ? o.t_min : 0.5 * wlo, thi = o.t_max > 0 ? o.t_max : 4 * whi;
  json heat = json::array();
  for (int i = 0; i < o.t_count; ++i) {
    double tt = tlo * std::pow(thi / tlo, double(i) / (o.t_count - 1));
    heat.push_back({{"t", tt}, {"K", heat_trace(r.eigenvalues, tt, true, area)}});
  }
  j["heat_trace"] = heat;
  try {
    HeatConstantFit fit = fit_heat_constant(r.eigenvalues, area, wlo, whi);
    j["heat_fit"] = {{"c0", fit.c0}, {"spread", fit.spread}, {"window", {fit.t_lo, fit.t_hi}}};
  } catch (const std::exception& e) {
    j["heat_fit"] = nullptr;
  }
  if (ext == Extension::Holomorphic) {
    j["zeta"] = nullptr;  // the kernel makes the determinant a det' over an approximate kernel
  } else {
    double c0 = ext == Extension::Szego ? szego_heat_constant(g) : friedrichs_heat_constant(g);
    ZetaDeterminant z = zeta_determinant(pos, area, c0 - zero);
    j["zeta"] = {{"log_det", z.log_det}, {"err", z.err}, {"c0", c0}, {"t0", z.t0}};
  }
  io::write_json(out.path("spectrum.json"), j);
  if (std::max(hermiticity_defect(op.stiffness), hermiticity_defect(op.mass)) > 1e-10) {
    log("[spectral] invariant violated: operator is not Hermitian");
    return kInvariant;
  }
  return kOk;
}

// ---------------------------------------------------------------- determinants

struct DeterminantOptions {
  std::string spins = "even:0,even:1";
  int num_eigs = 300;
  bool szego_fem = false;
  double q_budget = 0.1;
  double t0_inner = 0.10, t0_outer = 0.25;
};

int run_determinants(MeshOptions& m, const DeterminantOptions& o, std::uint64_t seed, const Output& out) {
  if (o.num_eigs < 50 || !(o.q_budget > 0) || !(o.t0_inner > 0 && o.t0_outer > o.t0_inner))
    throw io::ConfigError("--num-eigs >= 50, --q-budget > 0 and 0 < --t0-inner < --t0-outer required");
  Pipeline p;
  load(p, m);
  stage("homology_spin");
  auto spins = io::parse_spins(o.spins, p.moduli.genus);
  periods(p);
  EigOptions eo;
  eo.seed = seed;
  T0Options to;
  to.r1 = o.t0_inner;
  to.r2 = o.t0_outer;

  json cfg = m.config();
  cfg["spins"] = o.spins;
  cfg["num_eigs"] = o.num_eigs;
  cfg["szego_fem"] = o.szego_fem;
  cfg["q_budget"] = o.q_budget;
  cfg["t0_inner"] = o.t0_inner;
  cfg["t0_outer"] = o.t0_outer;
  cfg["seed"] = seed;
  json j = io::envelope("determinants", cfg);
  j["moduli"] = io::to_json(p.moduli);
  j["mesh"] = io::mesh_params_json(p.mesh->params);
  j["periods"] = io::periods_json(*p.periods);

  std::vector<DeterminantReport> reports;
  json arr = json::array();
  std::string csv = "signs,characteristic,log_det_F,log_det_F_err,log_det_T0,log_det_T0_err,theta_constant,log_det_S,log_det_S_err,Q,Q_err";
  csv += o.szego_fem ? ",log_det_S_fem,log_det_S_fem_err,log_ratio_assembled\n" : "\n";
  bool ok = true;
  for (SpinStructure s : spins) {
    stage("theta");
    s = calibrate(s, *p.theta);
    if (!s.characteristic.even()) throw io::ConfigError("spin " + s.signs_label() + " is odd: it has no Szegő kernel");
    SzegoKernel S(*p.theta, s.characteristic);
    stage("determinants");
    Timer t;
    ScatteringData sc = t_matrix_zero(S, to);
    log("T(0) for " + s.characteristic.label() + " (" + io::fmt(t.seconds()) + " s)");
    stage("spectral");
    SpectralDeterminant F = spectral_log_det(*p.mesh, s, Extension::Friedrichs, o.num_eigs, eo);
    log("det Delta_F for " + s.characteristic.label() + " (" + io::fmt(F.seconds) + " s)");
    stage("determinants");
    DeterminantReport r = assemble_report(s, F, S, sc);
    json rj = io::report_json(r);
    rj["friedrichs"] = io::spectral_determinant_json(F);
    std::string row = io::signs_compact(s) + "," + s.characteristic.label() + "," + io::fmt(r.log_det_F) + "," + io::fmt(r.log_det_F_err) + "," +
                      io::fmt(r.log_detT0) + "," + io::fmt(r.log_detT0_err) + "," + io::fmt(r.theta_constant) + "," + io::fmt(r.log_det_S) + "," +
                      io::fmt(r.log_det_S_err) + "," + io::fmt(r.Q) + "," + io::fmt(r.Q_err);
    if (o.szego_fem) {
      stage("spectral");
      SpectralDeterminant Sf = spectral_log_det(*p.mesh, s, Extension::Szego, o.num_eigs, eo);
      log("det Delta_S (FEM) for " + s.characteristic.label() + " (" + io::fmt(Sf.seconds) + " s)");
      const double pi2 = std::numbers::pi * std::numbers::pi;
      double lr = log_dhoker_phong_assembled(F.log_det, Sf.log_det, sc.detT0 * std::pow(pi2, sc.T0.rows()));
      rj["szego_fem"] = io::spectral_determinant_json(Sf);
      rj["log_ratio_assembled"] = lr;
      rj["log_ratio_closed"] = std::log(r.ratio_closed);
      row += "," + io::fmt(Sf.log_det) + "," + io::fmt(Sf.err) + "," + io::fmt(lr);
    }
    csv += row + "\n";
    const double qe = sc.quadrature_error.size() ? sc.quadrature_error.maxCoeff() : 0.0;
    if (sc.hermiticity_defect > std::max(qe, 1e-12) || (sc.T0.size() && sc.min_eigenvalue <= 0)) {
      log("[determinants] invariant violated: T(0) is not Hermitian positive within its error for " + s.characteristic.label());
      ok = false;
    }
    arr.push_back(rj);
    reports.push_back(r);
  }
  j["reports"] = arr;
  const double spread = spin_independence_spread(reports);
  double qerr = 0;
  for (const auto& r : reports) qerr = std::max(qerr, r.Q_err);
  j["spin_independence"] = {{"delta_Q", spread}, {"Q_err", qerr}, {"budget", o.q_budget}, {"within_budget", spread <= o.q_budget}};
  io::write_json(out.path("determinants.json"), j);
  io::write_text(out.path("summary.csv"), csv);
  log("delta Q = " + io::fmt(spread) + " (budget " + io::fmt(o.q_budget) + ")");
  if (spread > o.q_budget) {
    log("[determinants] invariant violated: Q differs across spin structures beyond the budget");
    ok = false;
  }
  return ok ? kOk : kInvariant;
}

// ---------------------------------------------------------------- report

std::vector<std::map<std::string, std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> head;
  std::vector<std::map<std::string, std::string>> rows;
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string x;
    while (std::getline(ss, x, ',')) f.push_back(x);
    return f;
  };
  if (!std::getline(in, line)) return rows;
  head = split(line);
  while (std::getline(in, line)) {
    auto f = split(line);
    std::map<std::string, std::string> r;
    for (size_t i = 0; i < head.size() && i < f.size(); ++i) r[head[i]] = f[i];
    rows.push_back(r);
  }
  return rows;
}

int run_report(const std::string& in_dir, const Output& out) {
  stage("cli");
  json checks = json::array();
  json summary;
  auto check = [&](const std::string& name, double value, double limit, bool below = true) {
    bool pass = below ? value <= limit : value >= limit;
    checks.push_back({{"check", name}, {"value", value}, {"limit", limit}, {"pass", pass}});
  };
  auto read = [&](const std::string& name) -> std::optional<json> {
    fs::path f = fs::path(in_dir) / name;
    if (!fs::exists(f)) return std::nullopt;
    json j = io::load_json_arg(f.string());
    if (j.value("schema", "") != io::kSchema) throw io::ConfigError(f.string() + ": unknown schema '" + j.value("schema", "") + "'");
    return j;
  };
  int found = 0;
  if (auto j = read("surface.json")) {
    ++found;
    summary["surface"] = {{"genus", (*j)["surface"]["genus"]}, {"triangles", (*j)["surface"]["mesh"]["num_triangles"]}, {"config_hash", (*j)["config_hash"]}};
    check("surface.area_identity_defect", (*j)["checks"]["area_identity_defect"].get<double>(), 1e-12);
  }
  if (auto j = read("periods.json")) {
    ++found;
    summary["periods"] = {{"B", (*j)["periods"]["B"]}, {"config_hash", (*j)["config_hash"]}};
    check("periods.symmetry_defect", (*j)["periods"]["symmetry_defect"].get<double>(), 1e-6);
    check("periods.imag_min_eigenvalue", (*j)["periods"]["imag_min_eigenvalue"].get<double>(), 0.0, false);
  }
  if (auto j = read("spectrum.json")) {
    ++found;
    summary["spectrum"] = {{"extension", (*j)["extension"]}, {"lambda_1", (*j)["eigenvalues"][(*j)["zero_modes"].get<int>()]}, {"zeta", (*j)["zeta"]},
                           {"config_hash", (*j)["config_hash"]}};
  }
  if (auto j = read("determinants.json")) {
    ++found;
    json rs = json::array();
    for (const auto& r : (*j)["reports"])
      rs.push_back({{"characteristic", r["spin"]["characteristic"]["label"]}, {"Q", r["Q"]}, {"Q_err", r["Q_err"]}, {"log_det_S", r["log_det_S"]}});
    summary["determinants"] = {{"reports", rs}, {"spin_independence", (*j)["spin_independence"]}, {"config_hash", (*j)["config_hash"]}};
    check("determinants.delta_Q", (*j)["spin_independence"]["delta_Q"].get<double>(), (*j)["spin_independence"]["budget"].get<double>());
  }
  for (const char* name : {"theta_selftest.csv", "cone_selftest.csv"}) {
    fs::path f = fs::path(in_dir) / name;
    if (!fs::exists(f)) continue;
    ++found;
    double worst = 0, worst_trace = 0;
    for (const auto& r : read_csv(f.string())) {
      auto it = r.find(std::string(name) == "theta_selftest.csv" ? "residual" : "abs_diff");
      if (it == r.end()) throw io::ConfigError(f.string() + ": missing column");
      double v = std::stod(it->second);
      bool trace = r.count("test_id") && r.at("test_id").rfind("trace_constant", 0) == 0;
      (trace ? worst_trace : worst) = std::max(trace ? worst_trace : worst, v);
    }
    std::string key = std::string(name).substr(0, std::string(name).size() - 4);
    check(key + ".max_difference", worst, 1e-8);
    if (key == "cone_selftest") check(key + ".trace_constant_difference", worst_trace, 1e-3);
  }
  if (!found) throw io::ConfigError("no spinlap artifacts in " + in_dir);
  json j = io::envelope("report", {{"in", in_dir}});
  j["summary"] = summary;
  j["checks"] = checks;
  io::write_json(out.path("report.json"), j);
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << (c["pass"].get<bool>() ? "PASS " : "FAIL ") << c["check"].get<std::string>() << " = " << io::fmt(c["value"].get<double>()) << " (limit "
              << io::fmt(c["limit"].get<double>()) << ")\n";
    ok = ok && c["pass"].get<bool>();
  }
  return ok ? kOk : kInvariant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spinlap: spinor Laplacians on translation surfaces of genus g"};
  app.set_help_flag("--help", "print this help and exit");  // -h is taken by the mesh size
  app.set_config("--config", "", "key = value configuration file ([subcommand] sections)");
  app.set_version_flag("--version", std::string(io::kVersion));
  app.require_subcommand(1);
  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "seed for sampled audits and the eigensolver start")->capture_default_str();

  MeshOptions mesh_opts;
  Output out;
  std::function<int()> action;

  auto* surface = app.add_subcommand("surface", "build the slit-torus surface and its mesh; writes surface.json");
  add_mesh_options(surface, mesh_opts);
  add_output(surface, out);
  surface->callback([&] { action = [&] { return run_surface(mesh_opts, out); }; });

  auto* per = app.add_subcommand("periods", "period matrix of the mesh; writes periods.json");
  add_mesh_options(per, mesh_opts);
  add_output(per, out);
  per->callback([&] { action = [&] { return run_periods(mesh_opts, out); }; });

  int theta_g = 3, theta_points = 100;
  double theta_tol = 1e-8;
  auto* th = app.add_subcommand("theta-selftest", "theta identities at random Siegel points; writes theta_selftest.csv");
  th->add_option("--g", theta_g, "largest genus")->capture_default_str();
  th->add_option("--points", theta_points, "random points per genus")->capture_default_str();
  th->add_option("--tol", theta_tol, "pass threshold")->capture_default_str();
  add_output(th, out);
  th->callback([&] { action = [&] { return run_theta_selftest(theta_g, theta_points, seed, theta_tol, out); }; });

  double cone_tol = 1e-8, trace_tol = 1e-3;
  auto* cone = app.add_subcommand("cone-selftest", "dual-route cone heat kernels; writes cone_selftest.csv");
  cone->add_option("--tol", cone_tol, "pass threshold for kernel differences")->capture_default_str();
  cone->add_option("--trace-tol", trace_tol, "pass threshold for trace constants")->capture_default_str();
  add_output(cone, out);
  cone->callback([&] { action = [&] { return run_cone_selftest(cone_tol, trace_tol, out); }; });

  SpectrumOptions spec;
  auto* sp = app.add_subcommand("spectrum", "eigenvalues, heat trace and zeta determinant; writes spectrum.json");
  add_mesh_options(sp, mesh_opts);
  sp->add_option("--spin", spec.spin, "spin structure (even:k, odd:k, index:k, signs:+-..)")->capture_default_str();
  sp->add_option("--extension", spec.extension, "friedrichs | szego | holomorphic")->capture_default_str();
  sp->add_option("--num-eigs", spec.num_eigs, "eigenvalues to compute")->capture_default_str();
  sp->add_option("--t-count", spec.t_count, "heat-trace samples")->capture_default_str();
  sp->add_option("--t-min", spec.t_min, "first heat-trace time (0: from the fit window)");
  sp->add_option("--t-max", spec.t_max, "last heat-trace time (0: from the fit window)");
  add_output(sp, out);
  sp->callback([&] { action = [&] { return run_spectrum(mesh_opts, spec, seed, out); }; });

  DeterminantOptions det;
  auto* de = app.add_subcommand("determinants", "det Delta_F, T(0), det Delta_S and Q per spin; writes determinants.json and summary.csv");
  add_mesh_options(de, mesh_opts);
  de->add_option("--spins", det.spins, "comma list of spin items (even:k, signs:.., all-even)")->capture_default_str();
  de->add_option("--num-eigs", det.num_eigs, "eigenvalues per determinant")->capture_default_str();
  de->add_flag("--szego-fem", det.szego_fem, "also solve the Szegő extension and assemble the D'Hoker-Phong ratio");
  de->add_option("--q-budget", det.q_budget, "allowed spread of Q across spins")->capture_default_str();
  de->add_option("--t0-inner", det.t0_inner, "inner cutoff radius of the T(0) cone disks (chart radius units)")->capture_default_str();
  de->add_option("--t0-outer", det.t0_outer, "outer cutoff radius of the T(0) cone disks")->capture_default_str();
  add_output(de, out);
  de->callback([&] { action = [&] { return run_determinants(mesh_opts, det, seed, out); }; });

  std::string in_dir;
  auto* rep = app.add_subcommand("report", "collect the artifacts of a run directory; writes report.json");
  rep->add_option("--in", in_dir, "directory with spinlap artifacts (default: --out)");
  add_output(rep, out);
  rep->callback([&] {
    action = [&] { return run_report(in_dir.empty() ? out.dir : in_dir, out); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // help and version are successes; every other parse failure is a configuration error
    return app.exit(e) == 0 ? kOk : kConfig;
  }
  try {
    out.prepare();
    return action();
  } catch (const io::ConfigError& e) {
    std::cerr << "spinlap: configuration error: " << e.what() << std::endl;
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "spinlap: [" << g_stage << "] error: " << e.what() << std::endl;
    return kPipeline;
  }
}
