#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mdid/cli.hpp"
#include "support.hpp"

using namespace mdid;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mdid");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string sample(const char* name) { return std::string(MDID_TEST_DIR) + "/../samples/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mdid_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  [[nodiscard]] std::string path(const char* name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, EstimateGoldenPanel) {
  const auto r = run({"estimate", "--panel", sample("golden_panel.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["estimates"]["classic_did"]["tau_hat"].get<double>(), 1.5);
  EXPECT_EQ(j["schema_version"].get<int>(), kSchemaVersion);
  EXPECT_NE(r.err.find("n=4 n1=2 n0=2 T=1 p=1"), std::string::npos);
}

TEST_F(CliTest, EstimateWritesPairs) {
  const auto r = run({"simulate", "--config", sample("canonical.cfg"), "--seed", "4", "--out", path("p.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto e = run({"estimate", "--panel", path("p.csv"), "--pairs-out", path("pairs"), "--out", path("e.json")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_TRUE(fs::exists(path("pairs_x.csv")));
  EXPECT_TRUE(fs::exists(path("pairs_xy.csv")));
  const auto j = Json::parse(slurp(path("e.json")));
  EXPECT_FALSE(j["plugin"].is_null());
}

TEST_F(CliTest, BiasCorrectAnchor) {
  const auto r = run({"bias-correct", "--tau", "0.102", "--bias", "0.02404"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0.078\n");
  EXPECT_EQ(run({"bias-correct", "--tau", "0.1"}).code, 1);
}

TEST_F(CliTest, UnknownFlagPrintsUsage) {
  const auto r = run({"estimate", "--panel", sample("golden_panel.csv"), "--frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"nonsense"}).code, 1);
}

TEST_F(CliTest, HelpSucceeds) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("verify"), std::string::npos);
}

TEST_F(CliTest, ValidationErrorsExitOne) {
  EXPECT_EQ(run({"estimate", "--panel", path("missing.csv")}).code, 1);
  std::ofstream(path("bad.csv")) << "unit_id,time,z,y\nu1,0,1,1\nu1,1,1,1\nu1,2,1,1\nu7,0,0,1\nu7,2,0,1\n";
  const auto r = run({"estimate", "--panel", path("bad.csv")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unbalanced panel: unit u7 missing t=1"), std::string::npos) << r.err;
  EXPECT_EQ(run({"decide", "--panel", sample("golden_panel.csv"), "--reps", "10"}).code, 1);
}

TEST_F(CliTest, NumericalFailureExitsTwo) {
  // Y_0 is an exact linear function of X, so the residualized pre-period
  // outcome has zero variance.
  std::ofstream f(path("singular.csv"));
  f << "unit_id,time,z,y,x1\n";
  for (int i = 0; i < 12; ++i) {
    const double x = i % 5;
    f << "u" << i << ",0," << (i < 4 ? 1 : 0) << ',' << 2.0 * x << ',' << x << '\n';
    f << "u" << i << ",1," << (i < 4 ? 1 : 0) << ',' << (i * 7 % 11) << ',' << x << '\n';
  }
  f.close();
  const auto r = run({"decide", "--panel", path("singular.csv"), "--reps", "0"});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.err.find("numerical error"), std::string::npos);
}

TEST_F(CliTest, SimulateMatchesLibrary) {
  ASSERT_EQ(run({"simulate", "--config", sample("canonical.cfg"), "--seed", "9", "--out", path("p.csv")}).code, 0);
  auto expected = simulate(io::load_params(sample("canonical.cfg")), 9);
  expected.theta.reset();
  EXPECT_EQ(io::load_panel(path("p.csv")), expected);
  const auto fixed = run({"simulate", "--config", sample("canonical.cfg"), "--n1", "10", "--n0", "30"});
  std::istringstream in(fixed.out);
  const auto p = io::read_panel(in);
  EXPECT_EQ(p.n_treated(), 10);
  EXPECT_EQ(p.n_control(), 30);
}

TEST_F(CliTest, VerifyCanonical) {
  const auto r = run({"verify", "--config", sample("canonical.cfg"), "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string first;
  std::getline(lines, first);
  EXPECT_EQ(first.rfind("v_did    theory 0.046800 | MC 0.04", 0), 0u) << first;
  EXPECT_NE(first.find("PASS"), std::string::npos) << first;
  EXPECT_NE(r.out.find("overall PASS"), std::string::npos) << r.out;
}

TEST_F(CliTest, VerifyJsonIndependentOfThreads) {
  const auto cfg = sample("canonical.cfg");
  ASSERT_EQ(run({"verify", "--config", cfg, "--reps", "2000", "--threads", "1", "--out", path("a.json")}).code, 0);
  ASSERT_EQ(run({"verify", "--config", cfg, "--reps", "2000", "--threads", "4", "--out", path("b.json")}).code, 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
}

TEST_F(CliTest, DecideJsonIndependentOfThreads) {
  ASSERT_EQ(run({"simulate", "--config", sample("canonical.cfg"), "--seed", "5", "--out", path("p.csv")}).code, 0);
  const auto a = run({"decide", "--panel", path("p.csv"), "--reps", "200", "--threads", "1", "--out", path("a.json")});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run({"decide", "--panel", path("p.csv"), "--reps", "200", "--threads", "3", "--out", path("b.json")});
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("Suggested Final Decision"), std::string::npos);
  const auto bc = run({"bias-correct", "--decision", path("a.json")});
  EXPECT_EQ(bc.code, 0) << bc.err;
  const auto d = decision_from_json(Json::parse(slurp(path("a.json"))));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f\n", *d.bias_corrected_tau);
  EXPECT_EQ(bc.out, buf);
}

TEST_F(CliTest, TradeoffGrid) {
  const auto r = run({"tradeoff", "--config", sample("canonical.cfg"), "--dtheta", "0:1:3", "--dx", "0:2:5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1 + 15);
  EXPECT_EQ(r.out.rfind("delta_theta,delta_x,v_did,v_didx,v_didxy", 0), 0u);
  EXPECT_EQ(run({"tradeoff", "--config", sample("canonical.cfg"), "--dx", "0:1"}).code, 1);
}
