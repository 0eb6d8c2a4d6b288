#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "vbmix/experiment.hpp"

using namespace vbmix;
namespace fs = std::filesystem;

namespace {

fs::path out_dir(const std::string& tag) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / ("vbmix_exp_" + std::string(info->name()) + "_" + tag);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentOptions small_table() {
  ExperimentOptions o;
  o.ns = {300};
  o.phi0s = {1, 6};
  o.ks = {3};
  o.reps = 2;
  return o;
}

}  // namespace

TEST(Presets, AllNamedPresetsHaveGrids) {
  for (const auto& name : preset_names()) {
    const ExperimentPreset p = make_preset(name);
    EXPECT_EQ(p.name, name);
    EXPECT_FALSE(p.ks.empty());
    EXPECT_FALSE(p.phi0s.empty());
    EXPECT_FALSE(detail::build_cells(p).empty()) << name;
  }
  EXPECT_EQ(make_preset("presets4").name, "preset4");
  EXPECT_EQ(make_preset("preset6").k_star, 5);
  EXPECT_EQ(make_preset("faithful").ks.back(), 6);
  EXPECT_EQ(make_preset("faithful").reps, 100);
  EXPECT_THROW(make_preset("figure9"), ContractViolation);
  EXPECT_THROW(make_preset("preset7"), ContractViolation);
  EXPECT_THROW(run_experiment("nope", 1, {}), ContractViolation);
}

TEST(Presets, OverridesValidated) {
  ExperimentOptions o;
  o.phi0s = {-1};
  EXPECT_THROW(configure_preset("table1", o), ContractViolation);
  o = {};
  o.reps = 0;
  EXPECT_THROW(configure_preset("table1", o), ContractViolation);
}

TEST(Presets, ComparisonModelsAreValid) {
  const int k_star[] = {2, 2, 3, 3, 5, 5};
  const int dims[] = {2, 2, 4, 4, 6, 6};
  for (int i = 1; i <= 6; ++i) {
    const MixtureParams m = comparison_model(i);
    EXPECT_EQ(static_cast<int>(m.size()), k_star[i - 1]);
    EXPECT_EQ(m.spec.dim, dims[i - 1]);
    double total = 0;
    for (double w : m.weights) total += w;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  EXPECT_THROW(comparison_model(7), ContractViolation);
}

TEST(RunExperiment, DeterministicOutputs) {
  const auto a = out_dir("a"), b = out_dir("b");
  run_experiment("table2", 5, a, small_table());
  run_experiment("table2", 5, b, small_table());
  for (const char* f : {"results.csv", "summary.json", "table2_w1.svg"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(slurp(a / "results.csv").substr(0, 48), "cell_key,k,phi0,n,rep,elbo,bic,w1,redundant_mass");
}

TEST(RunExperiment, ExecutionOrderDoesNotMatter) {
  const auto a = out_dir("a"), b = out_dir("b");
  ExperimentOptions o = small_table();
  run_experiment("table1", 6, a, o);
  o.shuffle_execution = 99;
  o.jobs = 3;
  run_experiment("table1", 6, b, o);
  for (const char* f : {"results.csv", "summary.json", "table1_n300.svg"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(RunExperiment, SeedChangesResults) {
  const auto a = run_experiment("table2", 1, {}, small_table());
  const auto b = run_experiment("table2", 2, {}, small_table());
  EXPECT_NE(detail::results_csv(a), detail::results_csv(b));
}

TEST(RunExperiment, FigurePresetsProducePlots) {
  ExperimentOptions o;
  o.ns = {400};
  o.phi0s = {1, 6};
  o.ks = {1, 2, 3};
  const auto dir = out_dir("f1");
  const auto oc = run_experiment("figure1", 3, dir, o);
  EXPECT_TRUE(fs::exists(dir / "figure1_n400.svg"));
  EXPECT_TRUE(oc.summary["errors"].empty());
  ASSERT_EQ(oc.summary["groups"].size(), 2u);
  EXPECT_EQ(oc.summary["groups"][0]["predicted_slope"], -1.0);

  o.ns = {50, 250};
  o.phi0s = {1};
  o.ks = {2, 3};
  o.reps = 1;
  const auto d2 = out_dir("f2");
  run_experiment("figure2", 3, d2, o);
  EXPECT_TRUE(fs::exists(d2 / "figure2_phi0_1.svg"));

  o.ns = {300};
  o.phi0s = {1, 6};
  const auto d3 = out_dir("f3");
  run_experiment("figure3", 3, d3, o);
  EXPECT_TRUE(fs::exists(d3 / "figure3.svg"));
}

TEST(RunExperiment, TableSummaryHasWeightsAndW1) {
  const auto oc = run_experiment("table2", 7, {}, small_table());
  ASSERT_EQ(oc.summary["groups"].size(), 2u);
  for (const auto& g : oc.summary["groups"]) {
    EXPECT_EQ(g["weight_mean"].size(), 3u);
    EXPECT_EQ(g["cells"], 2);
    EXPECT_GE(g["w1_mean"].get<double>(), 0.0);
  }
  EXPECT_EQ(oc.results.size(), 4u);
  for (const auto& r : oc.results) EXPECT_EQ(r.rows.size(), 1u);
}

TEST(RunExperiment, EvidencePreset) {
  ExperimentOptions o;
  o.ns = {60};
  o.phi0s = {1};
  o.ks = {1, 2};
  ChainSettings c;
  c.n_samples = 100;
  c.burn_in = 50;
  o.chain = c;
  o.rungs = 4;
  const auto dir = out_dir("ev");
  const auto oc = run_experiment("evidence_curve", 2, dir, o);
  EXPECT_TRUE(fs::exists(dir / "evidence_curve.svg"));
  ASSERT_EQ(oc.summary["groups"].size(), 2u);
  EXPECT_TRUE(oc.summary["groups"][0]["evidence_theory"].is_null());  // K < K*
  EXPECT_TRUE(oc.summary["groups"][1]["evidence_theory"].is_number());
}

TEST(RunExperiment, SelectionPreset) {
  ExperimentOptions o;
  o.ns = {150};
  o.reps = 2;
  const auto dir = out_dir("p2");
  const auto oc = run_experiment("preset2", 4, dir, o);
  EXPECT_TRUE(fs::exists(dir / "preset2.svg"));
  const auto& methods = oc.summary["groups"][0]["methods"];
  for (const char* m : {"elbo_phi0=1", "elbo_phi0=5", "bic"}) {
    ASSERT_TRUE(methods.contains(m)) << m;
    EXPECT_EQ(methods[m]["k_hat"].size(), 2u);
  }
}

TEST(RunExperiment, FaithfulSmallRun) {
  ExperimentOptions o;
  o.fractions = {0.25};
  o.reps = 3;
  o.phi0s = {1};
  const auto dir = out_dir("of");
  const auto oc = run_experiment("faithful", 11, dir, o);
  EXPECT_TRUE(fs::exists(dir / "faithful.svg"));
  EXPECT_EQ(oc.summary["full_data"]["elbo_phi0=1"], 2);
  EXPECT_EQ(oc.summary["groups"][0]["n"], 68);
  EXPECT_EQ(oc.summary["groups"][0]["methods"]["elbo_phi0=1"]["k_hat"].size(), 3u);
}

TEST(RunExperiment, CellErrorsAreRecordedNotFatal) {
  ExperimentOptions o;
  o.fractions = {0.001, 0.25};
  o.reps = 2;
  o.phi0s = {1};
  const auto oc = run_experiment("faithful", 11, {}, o);
  ASSERT_EQ(oc.summary["errors"].size(), 2u);
  EXPECT_NE(oc.summary["errors"][0].dump().find("fraction=0.001"), std::string::npos);
  EXPECT_EQ(oc.summary["full_data"]["elbo_phi0=1"], 2);
  EXPECT_EQ(oc.summary["groups"][1]["methods"]["elbo_phi0=1"]["k_hat"].size(), 2u);
}

TEST(ParallelFor, VisitsEachIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(3, 0, [](std::size_t) {}), ContractViolation);
}
