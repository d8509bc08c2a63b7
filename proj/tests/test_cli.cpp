#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"

namespace ecm {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  RunResult r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ecmech_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

std::vector<std::string> read_lines(const std::string& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string s; std::getline(in, s);) lines.push_back(s);
  return lines;
}

TEST_F(CliTest, SolvePrintsOptimumAndPasses) {
  const RunResult r = run_cli({"solve", test::kFixturePath});
  EXPECT_EQ(r.code, cli::kPass);
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  const RunResult csv = run_cli({"solve", test::kFixturePath, "--format", "csv"});
  EXPECT_EQ(csv.code, cli::kPass);
  EXPECT_EQ(csv.out.rfind("quantity,index,slot,value\n", 0), 0u);
  EXPECT_NE(csv.out.find("lambda,7,,1.10554"), std::string::npos);
}

TEST_F(CliTest, LearnWritesTrace) {
  const std::string trace = path("t.csv");
  const RunResult r = run_cli(
      {"learn", test::kFixturePath, "--alpha", "0.1", "--iters", "100", "--trace", trace});
  EXPECT_EQ(r.code, cli::kPass);
  const auto lines = read_lines(trace);
  // Header plus iterations 0..100.
  ASSERT_EQ(lines.size(), 102u);
  EXPECT_EQ(lines[0].rfind("k,", 0), 0u);
  EXPECT_NE(lines[0].find("dist_to_opt,dual_value"), std::string::npos);
  EXPECT_EQ(lines[1].rfind("0,", 0), 0u);
  EXPECT_EQ(lines[101].rfind("100,", 0), 0u);
  EXPECT_NE(r.err.find("warning: step size"), std::string::npos);
}

TEST_F(CliTest, VerifyTamperedProfileFails) {
  const std::string good = path("ne.json");
  ASSERT_EQ(run_cli({"ne", test::kFixturePath, "--profile-out", good, "--samples", "500"}).code,
            cli::kPass);
  const RunResult ok = run_cli({"verify", test::kFixturePath, good, "--samples", "500"});
  EXPECT_EQ(ok.code, cli::kPass);
  EXPECT_EQ(ok.out.rfind("user,coordinate,from,to,improvement\n", 0), 0u);

  Json j = Json::parse(read_text_file(good));
  j["y"][1][1] = j["y"][1][1].get<double>() + 0.1;
  const std::string bad = path("tampered.json");
  {
    std::ofstream(bad) << j.dump();
  }
  const RunResult r = run_cli({"verify", test::kFixturePath, bad, "--samples", "500"});
  EXPECT_EQ(r.code, cli::kVerificationFailed);
  EXPECT_NE(r.err.find("improving deviation: user"), std::string::npos);
}

TEST_F(CliTest, DistributedEquilibriumPasses) {
  const RunResult r = run_cli({"dist-ne", test::kFixturePath, "--samples", "500"});
  EXPECT_EQ(r.code, cli::kPass) << r.out << r.err;
  EXPECT_NE(r.out.find("helpers: phi(1)=2 phi(2)=1 phi(3)=2"), std::string::npos);
}

TEST_F(CliTest, InputErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, cli::kInputError);
  EXPECT_EQ(run_cli({"bogus"}).code, cli::kInputError);
  EXPECT_EQ(run_cli({"solve", path("missing.json")}).code, cli::kInputError);
  EXPECT_EQ(run_cli({"solve", test::kFixturePath, "--format", "xml"}).code, cli::kInputError);
  const std::string broken = path("broken.json");
  {
    std::ofstream(broken) << "{\"users\": [";
  }
  const RunResult r = run_cli({"solve", broken});
  EXPECT_EQ(r.code, cli::kInputError);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(CliTest, RepeatedRunsAreByteIdentical) {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {"solve", test::kFixturePath},
           {"ne", test::kFixturePath, "--seed", "5", "--samples", "300"},
           {"dist-ne", test::kFixturePath, "--seed", "5", "--samples", "300"},
           {"learn", test::kFixturePath}}) {
    const RunResult a = run_cli(args);
    const RunResult b = run_cli(args);
    EXPECT_EQ(a.code, b.code);
    EXPECT_EQ(a.out, b.out) << args[0];
    EXPECT_EQ(a.err, b.err) << args[0];
  }
}

}  // namespace
}  // namespace ecm
