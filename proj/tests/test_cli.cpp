#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mzi/report.hpp"

using namespace mzi;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args) {
  const std::string command = std::string(MZI_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return {-1, {}};
  std::string out;
  std::array<char, 4096> buf{};
  while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mzi_cli_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Cli, CompleteExperimentEnsembleFillsOnlyMatchedPairs) {
  const auto r = run("--scenario CE --theory ct --mode always-split --n 10000 --seed 42 --format json ensemble");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = json::parse(r.out);
  for (const auto& row : j.at("ensembles")) {
    const bool matched = row.at("source").get<std::string>().back() == row.at("detector").get<std::string>().back();
    if (matched) EXPECT_GT(row.at("count").get<int>(), 4500);
    else EXPECT_EQ(row.at("count").get<int>(), 0);
  }
  EXPECT_EQ(j.at("n_runs"), 10000);
}

TEST(Cli, FlagsMayFollowTheSubcommand) {
  const auto a = run("ensemble --scenario ME --n 50 --seed 1 --format csv");
  const auto b = run("--scenario ME --n 50 --seed 1 --format csv ensemble");
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST(Cli, CompareReportsTheQuarterDelta) {
  const auto r = run("--scenario CE --theory ct --n 4000 --seed 42 --format json compare");
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j.at("max_analytic_delta").get<double>(), 0.25, 1e-12);
  EXPECT_EQ(j.at("verdict"), "modes diverge");
}

TEST(Cli, SimulatePrintsARecord) {
  const auto r = run("--scenario BE --theory st --format json simulate --source S1 --detector D1");
  ASSERT_EQ(r.code, 0);
  const auto rec = record_from_json(json::parse(r.out));
  EXPECT_EQ(rec.theory, Theory::ST);
  EXPECT_EQ(rec.detector, "D1");
  EXPECT_TRUE(run("--scenario BE simulate").out.find("S1") != std::string::npos);
}

TEST(Cli, OracleGatePasses) {
  const auto r = run("oracle --dt 1000");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  // An impossible gate fails with its own exit code.
  EXPECT_EQ(run("oracle --dt 1000 --gate 0").code, 3);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("ensemble --bogus").code, 1);
  EXPECT_EQ(run("--theory qt ensemble").code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("--scenario NOPE ensemble").code, 2);
  EXPECT_EQ(run("--scenario /nonexistent/file.json ensemble").code, 2);
  EXPECT_EQ(run("--theory at ensemble --policy S1").code, 2);
  EXPECT_EQ(run("frames").code, 2);  // needs --out
}

TEST(Cli, FramesWritesPgmAndCsvPerPanel) {
  const auto dir = scratch("frames");
  const auto r = run("--scenario BE --theory ct --out " + dir.string() + " frames --grid 24");
  ASSERT_EQ(r.code, 0);
  int pgm = 0, csv = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    pgm += e.path().extension() == ".pgm";
    csv += e.path().extension() == ".csv";
  }
  EXPECT_EQ(pgm, 6);
  EXPECT_EQ(csv, 6);
  fs::remove_all(dir);
}

TEST(Cli, WritesToOutAndReplays) {
  const auto dir = scratch("replay");
  fs::create_directories(dir);
  const auto file = dir / "ens.json";
  ASSERT_EQ(run("--scenario CE --theory at --mode collapse --n 300 --seed 9 --format json --out " +
                file.string() + " ensemble")
                .code,
            0);
  const auto r = run("replay --in " + file.string());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("replay identical"), std::string::npos);

  // Tamper with one outcome: replay must report the mismatch.
  std::ifstream in(file);
  auto j = json::parse(in);
  auto outcomes = j.at("outcomes").get<std::string>();
  outcomes[5] = outcomes[5] == '1' ? '2' : '1';
  j["outcomes"] = outcomes;
  std::ofstream(file) << j.dump();
  EXPECT_EQ(run("replay --in " + file.string()).code, 2);
  fs::remove_all(dir);
}

TEST(Cli, LoadsShippedScenarioFiles) {
  const auto dir = fs::path(MZI_SOURCE_DIR) / "scenarios";
  ASSERT_TRUE(fs::exists(dir));
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_EQ(run("--scenario " + e.path().string() + " --n 100 ensemble").code, 0) << e.path();
  }
}
