#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "vbmix/evidence.hpp"
#include "vbmix/experiment.hpp"
#include "oracles.hpp"

using namespace vbmix;
using Eigen::VectorXd;

namespace {

double column_mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

ChainSettings settings(std::uint64_t seed, int samples = 2000, int burn = 500) {
  ChainSettings s;
  s.seed = seed;
  s.n_samples = samples;
  s.burn_in = burn;
  return s;
}

}  // namespace

TEST(MhSampler, PriorAtBetaZero) {
  const auto spec = FamilySpec::gaussian_location(1);
  const Dataset data = sample(bimodal_1d(), 50, 1);
  const PosteriorSamples ps = mh_posterior_sample(spec, data, 3, make_priors(spec, 1.0), settings(3, 20000), 0.0);
  std::vector<double> w0, mu0;
  for (const auto& t : ps.samples) {
    w0.push_back(t.weights[0]);
    mu0.push_back(t.components[0][0]);
  }
  EXPECT_LT(std::abs(column_mean(w0) - 1.0 / 3.0), 5 * batch_means_std_error(w0));
  EXPECT_LT(std::abs(column_mean(mu0)), 5 * batch_means_std_error(mu0));
  EXPECT_GT(ps.acceptance_rate, 0.0);
  EXPECT_LT(ps.acceptance_rate, 1.0);
}

TEST(MhSampler, ConjugatePosteriorMean) {
  const auto spec = FamilySpec::gaussian_location(1, 0.8);
  const Dataset data = sample(MixtureParams{spec, {1.0}, {VectorXd::Constant(1, 1.3)}}, 100, 2);
  const PosteriorSamples ps = mh_posterior_sample(spec, data, 1, make_priors(spec, 1.0), settings(4, 10000), 1.0);
  std::vector<double> mu;
  for (const auto& t : ps.samples) mu.push_back(t.components[0][0]);
  const double exact = (data.x.sum() / 0.8) / (1.0 + 100 / 0.8);
  EXPECT_LT(std::abs(column_mean(mu) - exact), 5 * batch_means_std_error(mu));
}

TEST(MhSampler, ExponentialPosteriorMean) {
  const auto spec = FamilySpec::exponential_rate();
  const Dataset data = sample(MixtureParams{spec, {1.0}, {VectorXd::Constant(1, 2.0)}}, 60, 5);
  const Priors priors = make_priors(spec, 1.0);
  const auto& g = std::get<GammaParams>(priors.component);
  const PosteriorSamples ps = mh_posterior_sample(spec, data, 1, priors, settings(6, 10000), 1.0);
  std::vector<double> rate;
  for (const auto& t : ps.samples) rate.push_back(t.components[0][0]);
  const double exact = (g.shape + 60) / (g.rate + data.x.sum());
  EXPECT_LT(std::abs(column_mean(rate) - exact), 5 * batch_means_std_error(rate));
}

TEST(MhSampler, Deterministic) {
  const auto spec = FamilySpec::gaussian_location(1);
  const Dataset data = sample(bimodal_1d(), 40, 1);
  const auto a = mh_posterior_sample(spec, data, 2, make_priors(spec, 1.0), settings(9, 200, 100), 1.0);
  const auto b = mh_posterior_sample(spec, data, 2, make_priors(spec, 1.0), settings(9, 200, 100), 1.0);
  EXPECT_EQ(a.logliks, b.logliks);
  const auto c = mh_posterior_sample(spec, data, 2, make_priors(spec, 1.0), settings(10, 200, 100), 1.0);
  EXPECT_NE(a.logliks, c.logliks);
}

TEST(MhSampler, ZeroAcceptanceIsNumericalError) {
  const auto spec = FamilySpec::gaussian_location(1);
  const Dataset data = sample(bimodal_1d(), 1000, 1);
  ChainSettings s = settings(1, 50, 0);
  s.step_components = 1e6;
  EXPECT_THROW(mh_posterior_sample(spec, data, 1, make_priors(spec, 1.0), s, 1.0), NumericalError);
}

TEST(MhSampler, Preconditions) {
  const auto spec = FamilySpec::gaussian_location(1);
  const Dataset data = sample(bimodal_1d(), 10, 1);
  EXPECT_THROW(mh_posterior_sample(spec, data, 1, make_priors(spec, 1.0), settings(1), 1.5), ContractViolation);
  EXPECT_THROW(mh_posterior_sample(spec, data, 1, make_priors(spec, 1.0), settings(1, 0), 1.0), ContractViolation);
  ChainSettings s = settings(1);
  s.step_weights = 0;
  EXPECT_THROW(mh_posterior_sample(spec, data, 2, make_priors(spec, 1.0), s, 1.0), ContractViolation);
}

TEST(MetropolisAccept, TwoPointStationaryFrequencies) {
  const double target[2] = {0.3, 0.7};
  auto rng = make_rng(11, "toy");
  int state = 0;
  std::vector<double> in_one;
  for (int t = 0; t < 200000; ++t) {
    const int proposal = 1 - state;
    if (metropolis_accept(std::log(target[state]), std::log(target[proposal]), rng)) state = proposal;
    in_one.push_back(state == 1 ? 1.0 : 0.0);
  }
  EXPECT_LT(std::abs(column_mean(in_one) - 0.7), 5 * batch_means_std_error(in_one));
}

TEST(SteppingStone, ExactEvidenceForOneComponent) {
  const auto spec = FamilySpec::gaussian_location(1);
  const Dataset data = sample(MixtureParams{spec, {1.0}, {VectorXd::Constant(1, 0.4)}}, 100, 7);
  const Priors priors = make_priors(spec, 1.0);
  const auto& p = std::get<NormalParams>(priors.component);
  const EvidenceEstimate est = stepping_stone_evidence(spec, data, 1, priors, settings(12), 30);
  const double exact = oracle::gaussian_log_evidence(data.x, 1.0, p.precision, p.mean);
  EXPECT_LT(std::abs(est.log_evidence - exact), 3 * est.std_error) << est.log_evidence << " vs " << exact;
  EXPECT_GT(est.std_error, 0.0);
  // the ELBO at K = 1 is exact, so the estimate sits on it
  const FitResult fit = fit_best(spec, data, 1, priors, 1);
  EXPECT_NEAR(fit.elbo, exact, 1e-8 * std::abs(exact));
  EXPECT_GE(est.log_evidence, fit.elbo - 3 * est.std_error);
}

TEST(SteppingStone, LadderAndBookkeeping) {
  const auto spec = FamilySpec::gaussian_location(1);
  const Dataset data = sample(bimodal_1d(), 30, 2);
  const EvidenceEstimate est = stepping_stone_evidence(spec, data, 2, make_priors(spec, 1.0), settings(1, 100, 50), 5);
  ASSERT_EQ(est.ladder.size(), 5u);
  EXPECT_EQ(est.ladder.front(), 0.0);
  EXPECT_EQ(est.ladder.back(), 1.0);
  for (std::size_t j = 1; j < est.ladder.size(); ++j) EXPECT_GT(est.ladder[j], est.ladder[j - 1]);
  EXPECT_EQ(est.acceptance_rates.size(), 4u);
  for (double a : est.acceptance_rates) {
    EXPECT_GT(a, 0.0);
    EXPECT_LT(a, 1.0);
  }
  double sum = 0;
  for (double r : est.rung_log_ratios) sum += r;
  EXPECT_NEAR(sum, est.log_evidence, 1e-9 * std::abs(sum));
  EXPECT_EQ(est, stepping_stone_evidence(spec, data, 2, make_priors(spec, 1.0), settings(1, 100, 50), 5));
  EXPECT_THROW(stepping_stone_evidence(spec, data, 2, make_priors(spec, 1.0), settings(1), 1), ContractViolation);
}

TEST(SteppingStone, TwoRungsIsPriorImportanceSampling) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(-120.0, 3.0);
  std::vector<double> ll(4000);
  for (double& v : ll) v = z(rng);
  const EvidenceEstimate est = stepping_stone_from_logliks({0.0, 1.0}, {ll});
  double top = -INFINITY;
  for (double v : ll) top = std::max(top, v);
  double s = 0;
  for (double v : ll) s += std::exp(v - top);
  EXPECT_NEAR(est.log_evidence, top + std::log(s / ll.size()), 1e-12 * std::abs(top));
}

TEST(SteppingStone, MoreSamplesShrinkStdError) {
  const auto spec = FamilySpec::gaussian_location(1);
  const Dataset data = sample(bimodal_1d(), 100, 4);
  double prev = INFINITY;
  for (int samples : {500, 1000, 2000}) {
    const double se = stepping_stone_evidence(spec, data, 2, make_priors(spec, 1.0), settings(5, samples), 16).std_error;
    EXPECT_LT(se, prev) << samples;
    prev = se;
  }
}

TEST(SteppingStone, ElboBelowEvidenceOnBimodal) {
  const auto spec = FamilySpec::gaussian_location(1);
  const Dataset data = sample(bimodal_1d(), 200, 6);
  for (int K = 1; K <= 3; ++K) {
    const Priors priors = make_priors(spec, 1.0);
    const EvidenceEstimate est = stepping_stone_evidence(spec, data, K, priors, settings(7, 1500, 300), 20);
    EXPECT_LE(fit_best(spec, data, K, priors, 8).elbo, est.log_evidence + 3 * est.std_error) << K;
  }
}

TEST(CubicLadder, Values) {
  const auto l = cubic_ladder(3);
  ASSERT_EQ(l.size(), 3u);
  EXPECT_EQ(l[0], 0.0);
  EXPECT_EQ(l[1], 0.125);
  EXPECT_EQ(l[2], 1.0);
  EXPECT_THROW(cubic_ladder(1), ContractViolation);
}

TEST(BatchMeans, IidScale) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 2.0);
  std::vector<double> v(40000);
  for (double& x : v) x = z(rng);
  EXPECT_NEAR(batch_means_std_error(v), 2.0 / std::sqrt(40000.0), 0.4 * 2.0 / std::sqrt(40000.0));
  EXPECT_EQ(batch_means_std_error(std::vector<double>(100, 3.0)), 0.0);
}

TEST(Rlct, SpecExamples) {
  for (int Ks = 1; Ks <= 4; ++Ks) {
    EXPECT_DOUBLE_EQ(rlct_location_gaussian(Ks, Ks), Ks - 0.5);
    EXPECT_DOUBLE_EQ(rlct_location_gaussian(Ks + 1, Ks), Ks - 0.25);
    EXPECT_DOUBLE_EQ(rlct_location_gaussian(Ks + 2, Ks), Ks);
  }
  EXPECT_THROW(rlct_location_gaussian(1, 2), ContractViolation);
}

TEST(Rlct, FormulaByEnumeration) {
  for (int Ks = 1; Ks <= 4; ++Ks)
    for (int K = Ks; K <= 10; ++K) {
      const int b = 2 * (K - Ks + 1);
      int j = 0;
      for (int i = 1; i <= b; ++i)
        if (i + i * i <= b) j = i;
      EXPECT_DOUBLE_EQ(rlct_location_gaussian(K, Ks), Ks - 1 + (j + j * j + b) / (4.0 * (j + 1)));
      if (K > Ks) {
        EXPECT_GE(rlct_location_gaussian(K, Ks), rlct_location_gaussian(K - 1, Ks));
      }
    }
}

TEST(TheoreticalCurve, SpecExamples) {
  EXPECT_EQ(theoretical_evidence_curve(-42.0, 3, 2, 1), -42.0);
  EXPECT_NEAR(theoretical_evidence_curve(-42.0, 2, 2, 10000), -42.0 - 1.5 * std::log(1e4), 1e-12);
  for (int K = 3; K <= 10; ++K)
    EXPECT_LE(theoretical_evidence_curve(0.0, K, 2, 3), theoretical_evidence_curve(0.0, K - 1, 2, 3));
}
