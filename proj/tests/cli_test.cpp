#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <regex>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;

struct Output {
  int status = -1;
  std::string text;
};

Output xdeal(const std::string& args, const std::string& env = {}) {
  std::string cmd = env + " " + std::string(XDEAL_CLI) + " " + args + " 2>&1";
  Output out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return out;
  std::array<char, 4096> buf{};
  while (auto n = fread(buf.data(), 1, buf.size(), pipe)) out.text.append(buf.data(), n);
  int rc = pclose(pipe);
  out.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return out;
}

std::string scenario(const std::string& name) { return std::string(XDEAL_SCENARIO_DIR) + "/" + name + ".json"; }

std::string trace_hash(const std::string& text) {
  std::smatch m;
  std::regex re("trace hash  ([0-9a-f]{64})");
  return std::regex_search(text, m, re) ? m[1].str() : "";
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("xdeal-cli-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

TEST(Cli, RunScenarioIsDeterministic) {
  auto a = xdeal("run-scenario " + scenario("demo") + " --seed 7");
  auto b = xdeal("run-scenario " + scenario("demo") + " --seed 7");
  ASSERT_EQ(a.status, 0) << a.text;
  EXPECT_FALSE(trace_hash(a.text).empty());
  EXPECT_EQ(trace_hash(a.text), trace_hash(b.text));
  EXPECT_NE(a.text.find("Committed"), std::string::npos);
}

TEST(Cli, InspectChainAndLogAfterARun) {
  auto dir = scratch("inspect");
  auto run = xdeal("run-scenario " + scenario("demo") + " --seed 3 --data-dir " + dir.string());
  ASSERT_EQ(run.status, 0) << run.text;

  auto owner = xdeal("inspect-chain ticket --nft ticket-1 --data-dir " + dir.string());
  EXPECT_EQ(owner.text, "ticket-1 alice\n");
  auto bal = xdeal("inspect-chain coin-a --account auctioneer --json --data-dir " + dir.string());
  EXPECT_EQ(nlohmann::json::parse(bal.text)["balance"], 130);
  auto full = xdeal("inspect-chain coin-b --data-dir " + dir.string());
  EXPECT_NE(full.text.find("bob  500"), std::string::npos) << full.text;

  auto log = xdeal("inspect-log a1 --data-dir " + dir.string());
  ASSERT_EQ(log.status, 0) << log.text;
  // Offsets appear in order, one record per line after the header.
  std::istringstream lines(log.text);
  std::string line;
  std::getline(lines, line);
  long expected = 0;
  while (std::getline(lines, line)) EXPECT_EQ(std::stol(line.substr(0, line.find(' '))), expected++);
  EXPECT_GE(expected, 5);
  EXPECT_NE(log.text.find("Conclusion  ccsvc  Commit"), std::string::npos) << log.text;

  auto topics = xdeal("inspect-log --data-dir " + dir.string());
  EXPECT_NE(topics.text.find("records"), std::string::npos);
  EXPECT_NE(xdeal("inspect-log nothing --data-dir " + dir.string()).status, 0);
  EXPECT_NE(xdeal("inspect-chain nowhere --data-dir " + dir.string()).status, 0);
  fs::remove_all(dir);
}

TEST(Cli, RealTimeRunUsesTheEnvironmentDataDir) {
  auto dir = scratch("env");
  auto env = "XDEAL_DATA_DIR=" + dir.string();
  auto run = xdeal("run-scenario " + scenario("flashloan-profitable") + " --seed 1 --real-time --tick-ms 0.05", env);
  ASSERT_EQ(run.status, 0) << run.text;
  EXPECT_EQ(xdeal("inspect-chain chain-a --account lender", env).text, "lender 1005\n");
  fs::remove_all(dir);
}

TEST(Cli, ExploreSummarisesSeeds) {
  auto out = xdeal("explore " + scenario("auction") + " --seeds 20 --json");
  ASSERT_EQ(out.status, 0) << out.text;
  auto j = nlohmann::json::parse(out.text);
  EXPECT_EQ(j["runs"], 20);
  EXPECT_EQ(j["completed"], 20);
}

TEST(Cli, ErrorsExitNonZero) {
  EXPECT_NE(xdeal("run-scenario /nonexistent.json").status, 0);
  EXPECT_NE(xdeal("bogus").status, 0);
  auto dir = scratch("bad");
  fs::create_directories(dir);
  auto bad = dir / "bad.json";
  FILE* f = fopen(bad.c_str(), "w");
  fputs(R"({"name":"x","genesis":{"actors":["a"],"chains":[]},"actions":[{"at":0,"actor":"a","op":"fly"}]})", f);
  fclose(f);
  auto out = xdeal("run-scenario " + bad.string());
  EXPECT_EQ(out.status, 2);
  EXPECT_NE(out.text.find("ScriptError"), std::string::npos) << out.text;
  fs::remove_all(dir);
}

TEST(Cli, DemoUpServesAndStops) {
  auto dir = scratch("demo-up");
  auto out = xdeal("demo-up --config " + scenario("demo") + " --port 0 --duration 1 --tick-ms 1 --replay --data-dir " +
                   dir.string());
  EXPECT_EQ(out.status, 0) << out.text;
  EXPECT_NE(out.text.find("gateway on http://127.0.0.1:"), std::string::npos) << out.text;
  EXPECT_TRUE(fs::exists(dir / "chains" / "ticket.json"));
  fs::remove_all(dir);
}

}  // namespace
