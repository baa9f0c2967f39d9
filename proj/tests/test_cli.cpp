#include "cli.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using magchain::cli::run;

namespace {

const std::string kSource = MAGCHAIN_SOURCE_DIR;
const std::string kDefaultConfig = kSource + "/configs/default.json";

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("magchain_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    unsetenv(magchain::cli::kConfigDirEnv);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string out(const std::string& sub = "") const { return (dir / sub).string(); }
};

}  // namespace

TEST_F(CliTest, HelpDocumentsUnits) {
  const auto r = invoke({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("mT"), std::string::npos);
  const auto s = invoke({"sweep", "--help"});
  EXPECT_EQ(s.code, 0);
  for (const char* unit : {"[deg]", "[mT]", "[mm]", "N*m/rad"}) EXPECT_NE(s.out.find(unit), std::string::npos) << unit;
}

TEST_F(CliTest, MissingConfigIsInputError) {
  const auto r = invoke({"--config", "/no/such/config.json", "design", "-o", out()});
  EXPECT_EQ(r.code, 2);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j["error"]["type"], "config_error");
  EXPECT_NE(j["error"]["message"].get<std::string>().find("/no/such/config.json"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"--config", kDefaultConfig, "sweep", "--vary", "speed"}).code, 2);
}

TEST_F(CliTest, DesignWritesTableTraceAndManifest) {
  const std::string before = slurp(kDefaultConfig);
  const auto r = invoke({"--config", kDefaultConfig, "design", "-o", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto table = slurp(dir / "design_table.csv");
  EXPECT_EQ(table.rfind("# magchain-csv v1 design_table\n", 0), 0u);
  EXPECT_NE(table.find("\n6,2.317"), std::string::npos) << table;
  EXPECT_TRUE(fs::exists(dir / "design_trace.csv"));
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["command"], "design");
  EXPECT_EQ(m["exit_code"], 0);
  EXPECT_EQ(m["outputs"].size(), 2u);
  EXPECT_TRUE(m["timing"].contains("duration_s"));
  EXPECT_EQ(m["parameters"]["spec"]["segments"], 6);
  EXPECT_EQ(slurp(kDefaultConfig), before);

  // Same inputs, byte-identical outputs.
  ASSERT_EQ(invoke({"--config", kDefaultConfig, "design", "-o", out("again")}).code, 0);
  EXPECT_EQ(slurp(dir / "again" / "design_table.csv"), table);
  EXPECT_EQ(slurp(dir / "again" / "design_trace.csv"), slurp(dir / "design_trace.csv"));
}

TEST_F(CliTest, TwoSegmentDesign) {
  auto doc = nlohmann::json::parse(slurp(kDefaultConfig));
  doc["segments"] = 2;
  std::ofstream(dir / "two.json") << doc.dump();
  ASSERT_EQ(invoke({"--config", (dir / "two.json").string(), "design", "-o", out()}).code, 0);
  const auto table = slurp(dir / "design_table.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);
}

TEST_F(CliTest, ConfigDirectoryFromEnvironment) {
  setenv(magchain::cli::kConfigDirEnv, (kSource + "/configs").c_str(), 1);
  EXPECT_EQ(invoke({"design", "-o", out()}).code, 0);
  EXPECT_EQ(invoke({"--config", "default.json", "design", "-o", out("rel")}).code, 0);
  unsetenv(magchain::cli::kConfigDirEnv);
  EXPECT_EQ(invoke({"design", "-o", out("none")}).code, 2);
}

TEST_F(CliTest, SolveStraightChain) {
  const auto r = invoke({"--config", kDefaultConfig, "solve", "--theta", "0", "--t", "3", "--design-table",
                         kSource + "/data/reference_design.csv", "-o", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto shape = slurp(dir / "shape.csv");
  EXPECT_NE(shape.find("magnet,x_mm,y_mm,z_mm,alpha_deg\n1,0.000000,0.000000,15.420000,0.000000\n"),
            std::string::npos)
      << shape;
  EXPECT_NE(shape.find("\n4,0.000000,0.000000,0.000000,\n"), std::string::npos);
}

TEST_F(CliTest, SolveDesignPoint) {
  const auto r = invoke({"--config", kDefaultConfig, "solve", "--theta", "200", "--t", "2", "--trace",
                         "--design-table", kSource + "/data/reference_design.csv", "-o", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["parameters"]["stiffness_source"], "design-table");
  EXPECT_LE(m["parameters"]["residual_norm"].get<double>(), 1e-10);
  std::istringstream shape(slurp(dir / "shape.csv"));
  std::string line;
  double sum = 0.0;
  while (std::getline(shape, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'm') continue;
    const auto cell = line.substr(line.rfind(',') + 1);
    if (!cell.empty()) sum += std::stod(cell);
  }
  EXPECT_NEAR(sum, 180.0, 0.5);
  EXPECT_TRUE(fs::exists(dir / "solve_trace.csv"));
}

TEST_F(CliTest, SolveRejectsTooManySegments) {
  const auto r = invoke({"--config", kDefaultConfig, "solve", "--theta", "10", "--t", "7", "-o", out()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"]["key_path"], "--t");
}

TEST_F(CliTest, SweepGamma) {
  const auto r = invoke({"--config", kDefaultConfig, "sweep", "--vary", "gamma", "--gamma-step", "45", "-o", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir / "pivot_vs_gamma.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2 + 5);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["parameters"]["stiffness_source"], "designer");
  EXPECT_EQ(m["parameters"]["success_fraction"], 1.0);
}

TEST_F(CliTest, SweepField) {
  const auto r = invoke({"--config", kDefaultConfig, "sweep", "--vary", "B", "--gamma-min", "90", "--gamma-max", "90",
                         "--B-min", "38", "--B-max", "42", "--B-step", "2", "-o", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir / "sweep_B.csv");
  EXPECT_NE(csv.find("\n90.0,40.000,80.000,"), std::string::npos) << csv;
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2 + 3);
}

TEST_F(CliTest, EfficiencySinglePoint) {
  const auto r = invoke({"--config", kDefaultConfig, "efficiency", "--gamma-min", "180", "--gamma-max", "180", "-o",
                         out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir / "efficiency.csv");
  EXPECT_NE(csv.find(",optimized,ok\n"), std::string::npos);
  EXPECT_NE(csv.find(",nonoptimized,ok\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2 + 2);
}

TEST_F(CliTest, MatchSprings) {
  const auto r = invoke({"match-springs", "--design-table", kSource + "/data/reference_design.csv", "--catalog",
                         kSource + "/data/selected_springs.csv", "--policy", "one-to-one", "-o", out()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir / "spring_match.csv");
  for (const char* e : {",3.94\n", ",2.39\n", ",2.51\n", ",1.60\n", ",4.44\n", ",2.85\n"})
    EXPECT_NE(csv.find(e), std::string::npos) << e;
  EXPECT_EQ(invoke({"match-springs", "--design-table", kSource + "/data/reference_design.csv", "-o", out("grid")}).code, 0);
}

TEST_F(CliTest, MatchSpringsEmptyCatalog) {
  std::ofstream(dir / "empty.csv") << "d_mm,D_mm,c,kb_Nm_per_rad,kc_N_per_m\n";
  const auto r = invoke({"match-springs", "--design-table", kSource + "/data/reference_design.csv", "--catalog",
                         (dir / "empty.csv").string(), "-o", out()});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, BinaryExitCodes) {
  const std::string tool = MAGCHAIN_TOOL;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status(tool + " --help"), 0);
  EXPECT_EQ(status(tool + " --config /no/such.json design -o " + out()), 2);
}
