#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "vbmix/experiment.hpp"
#include "vbmix/metrics.hpp"
#include "vbmix/transport.hpp"
#include "oracles.hpp"

using namespace vbmix;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd scalar(double v) { return VectorXd::Constant(1, v); }

MixingMeasure measure(std::vector<double> atoms, std::vector<double> masses) {
  MixingMeasure m;
  for (double a : atoms) m.atoms.push_back(scalar(a));
  m.masses = std::move(masses);
  return m;
}

MixingMeasure random_measure(std::mt19937_64& rng, int size, int dim) {
  std::normal_distribution<double> z;
  std::gamma_distribution<double> g(1.0, 1.0);
  MixingMeasure m;
  double total = 0;
  for (int k = 0; k < size; ++k) {
    VectorXd a(dim);
    for (int j = 0; j < dim; ++j) a[j] = z(rng);
    m.atoms.push_back(a);
    m.masses.push_back(g(rng) + 1e-3);
    total += m.masses.back();
  }
  for (auto& w : m.masses) w /= total;
  return m;
}

}  // namespace

TEST(Wasserstein, SpecExamples) {
  const auto G = measure({0, 2}, {0.3, 0.7});
  EXPECT_NEAR(wasserstein(G, G, 1), 0.0, 1e-15);
  for (int r : {1, 2, 3}) EXPECT_NEAR(wasserstein(measure({1.5}, {1}), measure({-2}, {1}), r), 3.5, 1e-12);
  EXPECT_NEAR(wasserstein(G, measure({0, 2}, {0.7, 0.3}), 1), 0.8, 1e-12);
}

TEST(Wasserstein, MassMismatchIsContractViolation) {
  EXPECT_THROW(wasserstein(measure({0}, {1.0}), measure({0}, {0.9}), 1), ContractViolation);
  EXPECT_THROW(wasserstein(measure({0}, {1.0}), measure({0}, {1.0}), 0), ContractViolation);
}

TEST(Wasserstein, MatchesTwoByTwoBruteForce) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto G = random_measure(rng, 2, 1 + t % 3), H = random_measure(rng, 2, 1 + t % 3);
    const int r = 1 + t % 2;
    EXPECT_NEAR(wasserstein(G, H, r), oracle::brute_force_2x2(G, H, r), 1e-9) << t;
  }
}

TEST(Wasserstein, MatchesVertexEnumerationUpToThreeAtoms) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto G = random_measure(rng, 1 + t % 3, 2), H = random_measure(rng, 1 + (t / 3) % 3, 2);
    EXPECT_NEAR(wasserstein(G, H, 1), oracle::vertex_enumeration(G, H, 1), 1e-9) << t;
  }
}

TEST(Wasserstein, MetricAxioms) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto A = random_measure(rng, 1 + t % 4, 2), B = random_measure(rng, 1 + (t + 1) % 5, 2),
               C = random_measure(rng, 1 + (t + 2) % 3, 2);
    const double ab = wasserstein(A, B), ba = wasserstein(B, A), bc = wasserstein(B, C), ac = wasserstein(A, C);
    EXPECT_NEAR(ab, ba, 1e-10);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ac, ab + bc + 1e-8);
    EXPECT_NEAR(wasserstein(A, A), 0.0, 1e-12);
  }
  // identical measures after canonicalization are at distance zero
  EXPECT_NEAR(wasserstein(measure({0, 0, 1}, {0.25, 0.25, 0.5}), measure({0, 1}, {0.5, 0.5})), 0.0, 1e-15);
}

TEST(SolveTransport, PlanHasRequestedMarginals) {
  MatrixXd cost(2, 3);
  cost << 1, 2, 3, 4, 1, 0;
  VectorXd a(2), b(3);
  a << 0.4, 0.6;
  b << 0.2, 0.3, 0.5;
  const TransportPlan plan = solve_transport(cost, a, b);
  EXPECT_LT((plan.coupling.rowwise().sum() - a).norm(), 1e-12);
  EXPECT_LT((plan.coupling.colwise().sum().transpose() - b).norm(), 1e-12);
  EXPECT_GE(plan.coupling.minCoeff(), 0.0);
  EXPECT_NEAR(plan.cost, 0.2 * 1 + 0.2 * 2 + 0.1 * 1 + 0.5 * 0, 1e-12);
}

TEST(SolveEqualityLp, InfeasibleIsContractViolation) {
  MatrixXd A(1, 2);
  A << 1, 1;
  EXPECT_THROW(solve_equality_lp(A, VectorXd::Constant(1, -1.0), VectorXd::Ones(2)), ContractViolation);
}

TEST(MergedWeightDiscrepancy, SpecExamples) {
  const auto Gs = measure({0, 2}, {0.5, 0.5});
  EXPECT_NEAR(merged_weight_discrepancy(Gs, Gs), 0.0, 1e-15);
  EXPECT_NEAR(merged_weight_discrepancy(measure({0, 2, 5}, {0.4, 0.4, 0.2}), Gs), 0.2, 1e-12);
  EXPECT_NEAR(merged_weight_discrepancy(measure({0}, {1.0}), measure({0, 5}, {0.5, 0.5})), 1.0, 1e-12);
}

TEST(MergedWeightDiscrepancy, ExactMergeAndBounds) {
  EXPECT_NEAR(merged_weight_discrepancy(measure({0, 0.1, 2, 2.1}, {0.2, 0.3, 0.25, 0.25}), measure({0, 2}, {0.5, 0.5})), 0.0, 1e-12);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto G = random_measure(rng, 1 + t % 6, 1), H = random_measure(rng, 1 + t % 3, 1);
    const double v = merged_weight_discrepancy(G, H);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-12);  // leaving every atom unassigned costs sum w* = 1
  }
}

TEST(MergedWeightDiscrepancy, MatchesPlainEnumeration) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 30; ++t) {
    const auto G = random_measure(rng, 2 + t % 4, 1), H = random_measure(rng, 1 + t % 3, 1);
    const int K = static_cast<int>(G.size()), Ks = static_cast<int>(H.size());
    double best = INFINITY;
    int total = 1;
    for (int k = 0; k < K; ++k) total *= Ks + 1;
    for (int code = 0; code < total; ++code) {
      std::vector<double> sums(Ks, 0.0);
      int c = code;
      for (int k = 0; k < K; ++k, c /= Ks + 1)
        if (c % (Ks + 1) < Ks) sums[c % (Ks + 1)] += G.masses[k];
      double obj = 0;
      for (int j = 0; j < Ks; ++j) obj += std::abs(sums[j] - H.masses[j]);
      best = std::min(best, obj);
    }
    EXPECT_NEAR(merged_weight_discrepancy(G, H), best, 1e-12);
  }
}

TEST(MergedWeightDiscrepancy, CapacityBound) {
  std::vector<double> atoms(13), masses(13, 1.0 / 13);
  for (int k = 0; k < 13; ++k) atoms[k] = k;
  EXPECT_THROW(merged_weight_discrepancy(measure(atoms, masses), measure({0}, {1.0})), CapacityError);
}

TEST(RedundantMass, SpecExamples) {
  EXPECT_DOUBLE_EQ(redundant_mass({0.5, 0.5, 0, 0, 0}, 2), 0.0);
  EXPECT_NEAR(redundant_mass({0.2, 0.2, 0.2, 0.2, 0.2}, 2), 0.6, 1e-15);
  EXPECT_THROW(redundant_mass({0.5, 0.5}, 3), ContractViolation);
}

TEST(RedundantMass, EmptyingOutOnSixDimPreset) {
  const auto truth = six_dim_two_component();
  const Dataset data = sample(truth, 10000, 6);
  const FitResult fit = fit_best(truth.spec, data, 5, make_priors(truth.spec, 1.0), 2);
  EXPECT_LT(redundant_mass(std::vector<double>(fit.weight_means.data(), fit.weight_means.data() + 5), 2), 0.005);
  const MixtureParams bar = posterior_mean_params(truth.spec, fit);
  EXPECT_LE(component_param_error(bar, truth), 5.0 * std::log(1e4) / std::sqrt(1e4));
}

TEST(ComponentParamError, SpecExamples) {
  const auto g = FamilySpec::gaussian_location(1);
  const MixtureParams star{g, {0.5, 0.5}, {scalar(-1), scalar(2)}};
  EXPECT_EQ(component_param_error(star, star), 0.0);
  const MixtureParams relabeled{g, {0.2, 0.5, 0.3}, {scalar(7), scalar(2), scalar(-1)}};
  EXPECT_EQ(component_param_error(relabeled, star), 0.0);
  const MixtureParams off{g, {0.5, 0.5}, {scalar(2.1), scalar(-1.3)}};
  EXPECT_NEAR(component_param_error(off, star), 0.3, 1e-12);
}

TEST(ComponentParamError, CapacityBound) {
  const auto g = FamilySpec::gaussian_location(1);
  MixtureParams big{g, std::vector<double>(11, 1.0 / 11), std::vector<VectorXd>(11, scalar(0))};
  const MixtureParams star{g, {1.0}, {scalar(0)}};
  EXPECT_THROW(component_param_error(big, star), CapacityError);
}

TEST(TvDistance, SpecExamples) {
  const auto g = FamilySpec::gaussian_location(1);
  const MixtureParams bimodal{g, {0.5, 0.5}, {scalar(-2), scalar(2)}};
  EXPECT_NEAR(tv_distance_1d(bimodal, bimodal), 0.0, 1e-6);
  EXPECT_GE(tv_distance_1d(MixtureParams{g, {1.0}, {scalar(0)}}, MixtureParams{g, {1.0}, {scalar(10)}}), 0.9999);

  const MixtureParams standard{g, {1.0}, {scalar(0)}};
  const auto pdf = [](double x, double mu) { return std::exp(-0.5 * (x - mu) * (x - mu)) / std::sqrt(2 * M_PI); };
  const int points = 1000000;
  const double lo = -14, hi = 14, h = (hi - lo) / points;
  double riemann = 0;
  for (int i = 0; i < points; ++i) {
    const double x = lo + (i + 0.5) * h;
    riemann += std::abs(0.5 * pdf(x, -2) + 0.5 * pdf(x, 2) - pdf(x, 0)) * h;
  }
  EXPECT_NEAR(tv_distance_1d(bimodal, standard), 0.5 * riemann, 1e-4);
}

TEST(TvDistance, RangeMonotonicityAndExponential) {
  const auto g = FamilySpec::gaussian_location(1);
  const MixtureParams base{g, {1.0}, {scalar(0)}};
  double prev = -1;
  for (double sep : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    const double tv = tv_distance_1d(MixtureParams{g, {1.0}, {scalar(sep)}}, base);
    EXPECT_GT(tv, prev);
    EXPECT_LE(tv, 1.0);
    EXPECT_NEAR(tv, std::erf(sep / (2 * std::sqrt(2.0))), 1e-5);  // 2 Phi(sep/2) - 1
    prev = tv;
  }
  const auto e = FamilySpec::exponential_rate();
  const double a = 1.0, b = 3.0;
  const double cross = std::log(b / a) / (b - a);
  EXPECT_NEAR(tv_distance_1d(MixtureParams{e, {1.0}, {scalar(a)}}, MixtureParams{e, {1.0}, {scalar(b)}}),
              std::exp(-a * cross) - std::exp(-b * cross), 1e-5);
}

TEST(TvDistance, UnsupportedFamilyIsCapacityError) {
  const auto g2 = FamilySpec::gaussian_location(2);
  const MixtureParams two{g2, {1.0}, {VectorXd::Zero(2)}};
  EXPECT_THROW(tv_distance_1d(two, two), CapacityError);
}
