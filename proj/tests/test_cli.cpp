#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spinlap/io.hpp"

using namespace spinlap;
using io::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = SPINLAP_CLI_PATH;

const char* kGenus2 = R"({"genus":2,"A":[[1,0],[1,0]],"B":[[0,1],[0.1,2]],"C":[[0.2,0],[0.5,0]]})";
const char* kTorus = R"({"genus":1,"A":[[1,0]],"B":[[0.2,1.1]],"C":[]})";

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("spinlap_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

// exit status of the binary; stdout/stderr go to <dir>/log.txt
int run(const std::string& args, const fs::path& dir) {
  std::string cmd = "'" + kCli + "' " + args + " > '" + (dir / "log.txt").string() + "' 2>&1";
  int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path moduli_file(const fs::path& dir, const char* text) {
  fs::path p = dir / "moduli.json";
  spit(p, text);
  return p;
}

}  // namespace

TEST(Cli, VersionAndHelp) {
  auto d = scratch("version");
  ASSERT_EQ(run("--version", d), 0);
  EXPECT_NE(slurp(d / "log.txt").find(io::kVersion), std::string::npos);
  ASSERT_EQ(run("--help", d), 0);
  for (const char* sub : {"surface", "periods", "theta-selftest", "cone-selftest", "spectrum", "determinants", "report"})
    EXPECT_NE(slurp(d / "log.txt").find(sub), std::string::npos) << sub;
}

TEST(Cli, SurfaceEnvelopeCarriesTheConfigHash) {
  auto d = scratch("surface");
  auto m = moduli_file(d, kGenus2);
  ASSERT_EQ(run("surface --moduli '" + m.string() + "' --h 0.1 --out '" + d.string() + "'", d), 0) << slurp(d / "log.txt");
  json j = read_json(d / "surface.json");
  EXPECT_EQ(j["schema"], io::kSchema);
  EXPECT_EQ(j["command"], "surface");
  EXPECT_EQ(j["config_hash"], io::config_hash(j["config"]));
  EXPECT_EQ(j["config_hash"].get<std::string>().size(), 64u);
  EXPECT_EQ(j["checks"]["euler_characteristic"], -2);
  EXPECT_EQ(j["surface"]["genus"], 2);
  EXPECT_EQ(j["surface"]["cone_points"].size(), 2u);
  const auto& s = j["surface"];
  EXPECT_EQ(s["vertices"].size(), s["vertex_torus"].size());
  EXPECT_LT(j["checks"]["area_identity_defect"].get<double>(), 1e-12);
  for (const char* mod : {"surface", "homology_spin", "hodge", "theta", "cone_analysis", "spectral", "determinants", "cli"})
    EXPECT_TRUE(j["modules"].contains(mod)) << mod;
}

TEST(Cli, RerunsAreByteIdentical) {
  auto a = scratch("rerun_a"), b = scratch("rerun_b");
  auto m = moduli_file(a, kGenus2);
  for (const auto& d : {a, b}) ASSERT_EQ(run("periods --moduli '" + m.string() + "' --h 0.1 --out '" + d.string() + "'", d), 0);
  EXPECT_EQ(slurp(a / "periods.json"), slurp(b / "periods.json"));
}

TEST(Cli, ConfigFileMatchesFlags) {
  auto a = scratch("config_a"), b = scratch("config_b");
  auto m = moduli_file(a, kGenus2);
  fs::path cfg = a / "run.toml";
  spit(cfg, "[surface]\nmoduli = \"" + m.string() + "\"\nh = 0.1\nout = \"" + a.string() + "\"\n");
  ASSERT_EQ(run("--config '" + cfg.string() + "' surface", a), 0) << slurp(a / "log.txt");
  ASSERT_EQ(run("surface --moduli '" + std::string(kGenus2) + "' --h 0.1 --out '" + b.string() + "'", b), 0);
  // file and inline moduli hash the same once parsed
  EXPECT_EQ(slurp(a / "surface.json"), slurp(b / "surface.json"));
}

TEST(Cli, PeriodsOfATorusIsTau) {
  auto d = scratch("periods_torus");
  ASSERT_EQ(run("periods --moduli '" + std::string(kTorus) + "' --h 0.1 --out '" + d.string() + "'", d), 0);
  json B = read_json(d / "periods.json")["periods"]["B"];
  EXPECT_NEAR(B[0][0][0].get<double>(), 0.2, 1e-10);
  EXPECT_NEAR(B[0][0][1].get<double>(), 1.1, 1e-10);
}

TEST(Cli, BadInputsExitWithConfigError) {
  auto d = scratch("bad");
  EXPECT_EQ(run("surface --moduli '{\"genus\":2,\"A\":[[1,0]],\"B\":[],\"C\":[]}' --out '" + d.string() + "'", d), 1);
  EXPECT_NE(slurp(d / "log.txt").find("configuration error"), std::string::npos);
  EXPECT_EQ(run("surface --moduli '" + (d / "missing.json").string() + "' --out '" + d.string() + "'", d), 1);
  EXPECT_EQ(run("surface --moduli '" + std::string(kTorus) + "' --h -1 --out '" + d.string() + "'", d), 1);
  EXPECT_EQ(run("spectrum --moduli '" + std::string(kTorus) + "' --extension bogus --out '" + d.string() + "'", d), 1);
  EXPECT_EQ(run("determinants --moduli '" + std::string(kTorus) + "' --h 0.1 --spins odd:0 --out '" + d.string() + "'", d), 1);
  EXPECT_EQ(run("surface --moduli '" + std::string(kTorus) + "' --out /proc/spinlap_nope", d), 1);
  EXPECT_EQ(run("report --in '" + (d / "empty").string() + "'", d), 1);
  EXPECT_EQ(run("no-such-command", d), 1);
}

TEST(Cli, SelftestCsvsHaveTheDocumentedColumns) {
  auto d = scratch("selftests");
  ASSERT_EQ(run("theta-selftest --g 2 --points 20 --out '" + d.string() + "'", d), 0) << slurp(d / "log.txt");
  ASSERT_EQ(run("cone-selftest --out '" + d.string() + "'", d), 0) << slurp(d / "log.txt");
  std::string th = slurp(d / "theta_selftest.csv"), co = slurp(d / "cone_selftest.csv");
  EXPECT_EQ(th.substr(0, th.find('\n')), "g,char,test,residual");
  EXPECT_EQ(co.substr(0, co.find('\n')), "test_id,alpha,t,value_route1,value_route2,abs_diff");
  EXPECT_GT(std::count(th.begin(), th.end(), '\n'), 20);
  EXPECT_GT(std::count(co.begin(), co.end(), '\n'), 5);
}

TEST(Cli, SpectrumOfATorus) {
  auto d = scratch("spectrum");
  ASSERT_EQ(run("spectrum --moduli '" + std::string(kTorus) + "' --h 0.05 --spin even:0 --extension friedrichs --out '" + d.string() + "'", d), 0)
      << slurp(d / "log.txt");
  json j = read_json(d / "spectrum.json");
  EXPECT_EQ(j["extension"], "friedrichs");
  EXPECT_EQ(j["h"], 0.05);
  EXPECT_EQ(j["eigenvalues"].size(), 200u);
  EXPECT_GE(j["heat_trace"].size(), 2u);
  EXPECT_TRUE(j["heat_trace"][0].contains("t") && j["heat_trace"][0].contains("K"));
  EXPECT_TRUE(j["zeta"].contains("log_det") && j["zeta"].contains("err"));
  double prev = -1;
  for (const auto& e : j["eigenvalues"]) {
    EXPECT_GE(e.get<double>(), prev - 1e-12);
    prev = e.get<double>();
  }
}

TEST(Cli, DeterminantsAndReportOnATorus) {
  auto d = scratch("determinants");
  ASSERT_EQ(run("determinants --moduli '" + std::string(kTorus) + "' --h 0.04 --spins all-even --out '" + d.string() + "'", d), 0)
      << slurp(d / "log.txt");
  json j = read_json(d / "determinants.json");
  ASSERT_EQ(j["reports"].size(), 3u);
  for (const auto& r : j["reports"]) {
    EXPECT_TRUE(r.contains("log_det_F") && r.contains("log_det_S") && r.contains("Q"));
  }
  EXPECT_LT(j["spin_independence"]["delta_Q"].get<double>(), 1e-3);
  std::string csv = slurp(d / "summary.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  ASSERT_EQ(run("report --in '" + d.string() + "' --out '" + d.string() + "'", d), 0) << slurp(d / "log.txt");
  std::string log = slurp(d / "log.txt");
  EXPECT_NE(log.find("PASS determinants.delta_Q"), std::string::npos) << log;
  EXPECT_EQ(log.find("FAIL"), std::string::npos) << log;
  EXPECT_EQ(read_json(d / "report.json")["schema"], io::kSchema);
}
