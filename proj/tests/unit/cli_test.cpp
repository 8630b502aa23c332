#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {


std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ctest runs each case in its own process, possibly in parallel; each gets its own directory.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    tmp_ = fs::temp_directory_path() /
           ("segtriage_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  void TearDown() override { fs::remove_all(tmp_); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(SEGTRIAGE_CLI) + " " + args + " >" + (tmp_ / "out.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string p(const std::string& name) const { return (tmp_ / name).string(); }

  fs::path tmp_;
};

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("score"), 2);
  EXPECT_EQ(run("score -i x --format xml"), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(CliTest, PipelineComposes) {
  ASSERT_EQ(run("gen -o " + p("corpus") + " -n 60 --seed 3 --height 32 --width 32"), 0);
  ASSERT_EQ(run("validate -i " + p("corpus")), 0);
  ASSERT_EQ(run("score -i " + p("corpus") + " -o " + p("scores.csv")), 0);
  EXPECT_TRUE(fs::exists(p("scores.csv.json")));
  ASSERT_EQ(run("correlate -i " + p("scores.csv")), 0);
  EXPECT_NE(slurp(tmp_ / "out.txt").find("image mean entropy"), std::string::npos);
  ASSERT_EQ(run("fit -i " + p("scores.csv") + " -o " + p("model.json")), 0);
  EXPECT_NE(slurp(p("model.json")).find("segtriage.quality_model"), std::string::npos);
  ASSERT_EQ(run("simulate -i " + p("scores.csv") + " -o " + p("a.csv") + " --report " + p("r.json") + " --seed 9"), 0);
  ASSERT_EQ(run("simulate -i " + p("scores.csv") + " -o " + p("b.csv") + " --seed 9"), 0);
  EXPECT_EQ(slurp(p("a.csv")), slurp(p("b.csv")));
  EXPECT_EQ(slurp(p("a.csv")).rfind("policy,budget,performance\n", 0), 0u);

  ASSERT_EQ(run("score -i " + p("corpus") + " -o " + p("scores.json") + " --format json"), 0);
  ASSERT_EQ(run("fit -i " + p("scores.json")), 0);
}

TEST_F(CliTest, InvalidBundleExitsOne) {
  fs::create_directories(tmp_ / "bad");
  std::ofstream(tmp_ / "bad" / "x.ubnd") << "not a bundle";
  EXPECT_EQ(run("validate -i " + p("bad")), 1);
  EXPECT_NE(slurp(tmp_ / "out.txt").find("bad_magic"), std::string::npos);
  EXPECT_EQ(run("score -i " + p("bad")), 1);
  EXPECT_EQ(run("fit -i " + p("missing.csv")), 1);
}
