#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / ("vbmix_cli_" + std::string(info->name()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& dir) {
  const std::string cmd = "cd '" + dir.string() + "' && '" VBMIX_CLI "' " + args + " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& body) { std::ofstream(p, std::ios::binary) << body; }

}  // namespace

TEST(Cli, SimulateThenSelect) {
  const auto dir = work_dir();
  ASSERT_EQ(run("simulate --preset figure1 --n 2000 --seed 4 --out d.csv", dir), 0);
  EXPECT_EQ(slurp(dir / "d.csv").substr(0, 18), "x1,x2,x3,x4,x5,x6\n");
  ASSERT_EQ(run("select --data d.csv --kmax 4 --seed 2 --out r.json", dir), 0) << slurp(dir / "stderr.txt");
  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  EXPECT_EQ(j["k_hat"], 2);
  EXPECT_EQ(j["per_k"].size(), 4u);
}

TEST(Cli, SimulateIsDeterministic) {
  const auto dir = work_dir();
  ASSERT_EQ(run("simulate --preset preset3 --n 100 --seed 9 --out a.csv", dir), 0);
  ASSERT_EQ(run("simulate --preset presets3 --n 100 --seed 9 --out b.csv", dir), 0);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
}

TEST(Cli, FitAndEvidence) {
  const auto dir = work_dir();
  ASSERT_EQ(run("simulate --preset evidence_curve --n 80 --seed 1 --out d.csv", dir), 0);
  ASSERT_EQ(run("fit --data d.csv --family gaussian --sigma2 1 --k 2 --phi0 0.5 --seed 3 --out f.json", dir), 0);
  const auto f = nlohmann::json::parse(slurp(dir / "f.json"));
  EXPECT_EQ(f["k"], 2);
  EXPECT_EQ(f["phi0"], 0.5);
  ASSERT_EQ(run("evidence --data d.csv --k 2 --rungs 4 --samples 100 --burn-in 50 --seed 3 --out e.json", dir), 0);
  const auto e = nlohmann::json::parse(slurp(dir / "e.json"));
  EXPECT_EQ(e["ladder"].size(), 4u);
  EXPECT_EQ(e["n_samples"], 100);
}

TEST(Cli, ExperimentWritesOutputs) {
  const auto dir = work_dir();
  ASSERT_EQ(run("experiment table2 --seed 1 --out out --reps 1 --n 300 --phi0 1 6 --k 3 --jobs 2", dir), 0)
      << slurp(dir / "stderr.txt");
  for (const char* f : {"results.csv", "summary.json", "table2_w1.svg"}) EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  EXPECT_EQ(run("experiment figure7 --seed 1 --out out", dir), 1);
}

TEST(Cli, ConfigFilePrecedence) {
  const auto dir = work_dir();
  ASSERT_EQ(run("simulate --preset evidence_curve --n 60 --seed 1 --out d.csv", dir), 0);
  write(dir / "run.cfg", "# fit settings\nk = 2\nphi0 = 3\nseed = 5\n");
  ASSERT_EQ(run("fit --config run.cfg --data d.csv --phi0 0.25 --out f.json", dir), 0) << slurp(dir / "stderr.txt");
  const auto f = nlohmann::json::parse(slurp(dir / "f.json"));
  EXPECT_EQ(f["k"], 2);          // file beats default
  EXPECT_EQ(f["phi0"], 0.25);    // flag beats file
  EXPECT_EQ(run("fit --config missing.cfg --data d.csv --k 1 --out f.json", dir), 2);
}

TEST(Cli, ExitCodes) {
  const auto dir = work_dir();
  EXPECT_EQ(run("--help", dir), 0);
  EXPECT_EQ(run("", dir), 1);
  EXPECT_EQ(run("fit --data d.csv --out f.json", dir), 1);  // missing --k
  EXPECT_EQ(run("fit --data nowhere.csv --k 2 --out f.json", dir), 2);
  write(dir / "ragged.csv", "x1,x2\n1,2\n3\n");
  EXPECT_EQ(run("fit --data ragged.csv --k 2 --out f.json", dir), 2);
  EXPECT_NE(slurp(dir / "stderr.txt").find("line 3"), std::string::npos);
  write(dir / "ok.csv", "x1\n1\n2\n3\n");
  EXPECT_EQ(run("fit --data ok.csv --k 2 --phi0 -1 --out f.json", dir), 1);
  EXPECT_EQ(run("fit --data ok.csv --k 5 --out f.json", dir), 1);  // K > n
  write(dir / "huge.csv", "x1\n1e200\n1e200\n1e200\n");
  EXPECT_EQ(run("fit --data huge.csv --k 1 --out f.json", dir), 3);
}
