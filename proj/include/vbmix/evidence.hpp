#pragma once

// Model evidence log ∫ pi(theta) p(X | theta) dtheta by stepping-stone sampling over a
// tempered path pi(theta) p(X | theta)^beta, with random-walk Metropolis at each rung, plus
// the known RLCT curve for univariate location-Gaussian mixtures.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vbmix/errors.hpp"
#include "vbmix/family.hpp"
#include "vbmix/mixture.hpp"
#include "vbmix/numerics.hpp"
#include "vbmix/random.hpp"
#include "vbmix/vb.hpp"

namespace vbmix {

struct ChainSettings {
  int n_samples = 2000;  // recorded sweeps per rung
  int burn_in = 500;     // discarded sweeps per rung; step sizes adapt only here
  double step_weights = 0.3;     // logistic-normal step on weight logits
  double step_components = 0.2;  // Gaussian step on component coordinates
  std::uint64_t seed = 0;
  int adapt_interval = 100;  // burn-in sweeps between acceptance checks
};

struct EvidenceEstimate {
  double log_evidence = 0.0;
  double std_error = 0.0;
  std::vector<double> ladder;            // inverse temperatures, 0 = beta_0 < ... < beta_R = 1
  std::vector<double> acceptance_rates;  // per rung, over recorded sweeps
  std::vector<double> rung_log_ratios;   // log E_{beta_j}[p(X|theta)^(beta_{j+1} - beta_j)]
  int n_samples = 0;
  int burn_in = 0;
  std::uint64_t seed = 0;

  bool operator==(const EvidenceEstimate&) const = default;
};

/// Generic Metropolis accept/reject for a symmetric proposal.
template <class Rng>
bool metropolis_accept(double log_target_current, double log_target_proposed, Rng& rng) {
  if (log_target_proposed >= log_target_current) return true;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return std::log(unif(rng)) < log_target_proposed - log_target_current;
}

namespace detail {

// Sampler state in unconstrained coordinates:
//   weights     K logits, the last pinned at 0 (w = softmax)
//   gaussian    the location vector itself
//   exponential log-rate
//   multinomial d logits, the last pinned at 0
// Log priors below include the Jacobian of the map to these coordinates.
class TemperedChain {
 public:
  TemperedChain(const FamilySpec& spec, const Dataset& data, int K, const Priors& priors, Rng rng)
      : spec_(spec), data_(data), K_(K), priors_(priors), rng_(std::move(rng)) {
    if (K < 1) throw ContractViolation("mh_posterior_sample: K must be >= 1");
    check_conjugate(spec, priors.component);
    draw_from_prior();
  }

  void set_beta(double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ContractViolation("mh_posterior_sample: beta must lie in [0, 1]");
    beta_ = beta;
  }

  double loglik() const { return loglik_; }

  MixtureParams params() const {
    MixtureParams theta{spec_, softmax_pinned(weight_logits_), {}};
    for (const auto& u : coords_) theta.components.push_back(to_parameter(u));
    double total = 0.0;
    for (double w : theta.weights) total += w;
    for (double& w : theta.weights) w /= total;
    return theta;
  }

  struct SweepCounts {
    long proposed = 0;
    long accepted = 0;
    long proposed_w = 0;
    long accepted_w = 0;
    long proposed_c = 0;
    long accepted_c = 0;
  };

  // One weight-block move (K > 1) followed by one move per component.
  void sweep(double step_w, double step_c, SweepCounts& counts) {
    std::normal_distribution<double> normal(0.0, 1.0);
    if (K_ > 1) {
      std::vector<double> proposal = weight_logits_;
      for (int k = 0; k + 1 < K_; ++k) proposal[static_cast<std::size_t>(k)] += step_w * normal(rng_);
      const std::vector<double> log_w = log_softmax_pinned(proposal);
      const double ll = loglik_with(log_w, log_comp_);
      const double lp = weight_log_prior(log_w);
      ++counts.proposed;
      ++counts.proposed_w;
      if (metropolis_accept(weight_prior_ + beta_ * loglik_, lp + beta_ * ll, rng_)) {
        weight_logits_ = std::move(proposal);
        log_w_ = log_w;
        weight_prior_ = lp;
        loglik_ = ll;
        ++counts.accepted;
        ++counts.accepted_w;
      }
    }
    for (int k = 0; k < K_; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      Eigen::VectorXd proposal = coords_[uk];
      for (Eigen::Index j = 0; j < free_coords(); ++j) proposal[j] += step_c * normal(rng_);
      const double lp = component_log_prior(proposal);
      Eigen::MatrixXd comp = log_comp_;
      comp.col(k) = column_log_density(proposal);
      const double ll = loglik_with(log_w_, comp);
      ++counts.proposed;
      ++counts.proposed_c;
      if (metropolis_accept(component_prior_[uk] + beta_ * loglik_, lp + beta_ * ll, rng_)) {
        coords_[uk] = std::move(proposal);
        component_prior_[uk] = lp;
        log_comp_.col(k) = comp.col(k);
        loglik_ = ll;
        ++counts.accepted;
        ++counts.accepted_c;
      }
    }
  }

 private:
  Eigen::Index free_coords() const {
    switch (spec_.kind) {
      case FamilyKind::gaussian_location: return spec_.dim;
      case FamilyKind::exponential_rate: return 1;
      case FamilyKind::multinomial: return spec_.dim - 1;
    }
    return 0;
  }

  static std::vector<double> log_softmax_pinned(std::span<const double> logits) {
    const double lse = log_sum_exp(logits);
    std::vector<double> out(logits.begin(), logits.end());
    for (double& v : out) v -= lse;
    return out;
  }
  static std::vector<double> softmax_pinned(std::span<const double> logits) {
    std::vector<double> out = log_softmax_pinned(logits);
    for (double& v : out) v = std::exp(v);
    return out;
  }

  Eigen::VectorXd to_parameter(const Eigen::VectorXd& u) const {
    switch (spec_.kind) {
      case FamilyKind::gaussian_location: return u;
      case FamilyKind::exponential_rate: return Eigen::VectorXd::Constant(1, std::exp(u[0]));
      case FamilyKind::multinomial: {
        std::vector<double> logits(u.data(), u.data() + u.size());
        logits.push_back(0.0);
        const auto p = softmax_pinned(logits);
        Eigen::VectorXd eta = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
        return eta / eta.sum();
      }
    }
    return u;
  }

  double weight_log_prior(std::span<const double> log_w) const {
    // Dir(phi0) density times the softmax Jacobian prod_k w_k
    double lp = 0.0;
    for (double lw : log_w) lp += priors_.weights.phi0 * lw;
    return lp;
  }

  double component_log_prior(const Eigen::VectorXd& u) const {
    switch (spec_.kind) {
      case FamilyKind::gaussian_location: {
        const auto& p = std::get<NormalParams>(priors_.component);
        return -0.5 * p.precision * (u - p.mean).squaredNorm();
      }
      case FamilyKind::exponential_rate: {
        const auto& p = std::get<GammaParams>(priors_.component);
        return p.shape * u[0] - p.rate * std::exp(u[0]);
      }
      case FamilyKind::multinomial: {
        const auto& p = std::get<DirichletParams>(priors_.component);
        std::vector<double> logits(u.data(), u.data() + u.size());
        logits.push_back(0.0);
        const auto log_p = log_softmax_pinned(logits);
        double lp = 0.0;
        for (std::size_t j = 0; j < log_p.size(); ++j) lp += p.concentration[static_cast<Eigen::Index>(j)] * log_p[j];
        return lp;
      }
    }
    return 0.0;
  }

  Eigen::VectorXd column_log_density(const Eigen::VectorXd& u) const {
    return log_density_matrix(spec_, data_.x, {to_parameter(u)}).col(0);
  }

  double loglik_with(std::span<const double> log_w, const Eigen::MatrixXd& comp) const {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < comp.rows(); ++i) {
      double top = -std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < K_; ++k) top = std::max(top, log_w[static_cast<std::size_t>(k)] + comp(i, k));
      double sum = 0.0;
      for (Eigen::Index k = 0; k < K_; ++k) sum += std::exp(log_w[static_cast<std::size_t>(k)] + comp(i, k) - top);
      ll += top + std::log(sum);
    }
    return ll;
  }

  void draw_from_prior() {
    // weights from Dir(phi0) via Gamma draws; components from the conjugate prior
    std::gamma_distribution<double> gamma_w(priors_.weights.phi0, 1.0);
    std::vector<double> g(static_cast<std::size_t>(K_));
    for (double& v : g) v = std::max(gamma_w(rng_), 1e-300);
    weight_logits_.assign(static_cast<std::size_t>(K_), 0.0);
    for (int k = 0; k < K_; ++k)
      weight_logits_[static_cast<std::size_t>(k)] = std::log(g[static_cast<std::size_t>(k)]) - std::log(g.back());
    std::normal_distribution<double> normal(0.0, 1.0);
    coords_.clear();
    for (int k = 0; k < K_; ++k) {
      Eigen::VectorXd u(free_coords());
      switch (spec_.kind) {
        case FamilyKind::gaussian_location: {
          const auto& p = std::get<NormalParams>(priors_.component);
          for (Eigen::Index j = 0; j < u.size(); ++j) u[j] = p.mean[j] + normal(rng_) / std::sqrt(p.precision);
          break;
        }
        case FamilyKind::exponential_rate: {
          const auto& p = std::get<GammaParams>(priors_.component);
          std::gamma_distribution<double> gamma(p.shape, 1.0 / p.rate);
          u[0] = std::log(std::max(gamma(rng_), 1e-300));
          break;
        }
        case FamilyKind::multinomial: {
          const auto& p = std::get<DirichletParams>(priors_.component);
          std::vector<double> draws;
          for (Eigen::Index j = 0; j < p.concentration.size(); ++j) {
            std::gamma_distribution<double> gamma(p.concentration[j], 1.0);
            draws.push_back(std::max(gamma(rng_), 1e-300));
          }
          for (Eigen::Index j = 0; j < u.size(); ++j) u[j] = std::log(draws[static_cast<std::size_t>(j)]) - std::log(draws.back());
          break;
        }
      }
      coords_.push_back(std::move(u));
    }
    log_w_ = log_softmax_pinned(weight_logits_);
    weight_prior_ = weight_log_prior(log_w_);
    log_comp_.resize(data_.size(), K_);
    component_prior_.clear();
    for (int k = 0; k < K_; ++k) {
      log_comp_.col(k) = column_log_density(coords_[static_cast<std::size_t>(k)]);
      component_prior_.push_back(component_log_prior(coords_[static_cast<std::size_t>(k)]));
    }
    loglik_ = loglik_with(log_w_, log_comp_);
  }

  FamilySpec spec_;
  const Dataset& data_;
  int K_;
  Priors priors_;
  Rng rng_;
  double beta_ = 1.0;

  std::vector<double> weight_logits_;
  std::vector<double> log_w_;
  double weight_prior_ = 0.0;
  std::vector<Eigen::VectorXd> coords_;
  std::vector<double> component_prior_;
  Eigen::MatrixXd log_comp_;  // n x K log g(x_i; eta_k)
  double loglik_ = 0.0;
};

struct RungOutput {
  std::vector<double> logliks;
  std::vector<MixtureParams> samples;
  double acceptance = 0.0;
};

// Burn-in with step halving, then n_samples recorded sweeps.
inline RungOutput run_rung(TemperedChain& chain, ChainSettings& settings, bool keep_samples) {
  using Counts = TemperedChain::SweepCounts;
  Counts window;
  for (int s = 1; s <= settings.burn_in; ++s) {
    chain.sweep(settings.step_weights, settings.step_components, window);
    if (s % settings.adapt_interval == 0) {
      if (window.proposed_w > 0 && window.accepted_w < 0.1 * window.proposed_w) settings.step_weights *= 0.5;
      if (window.proposed_c > 0 && window.accepted_c < 0.1 * window.proposed_c) settings.step_components *= 0.5;
      window = {};
    }
  }
  Counts counts;
  RungOutput out;
  out.logliks.reserve(static_cast<std::size_t>(settings.n_samples));
  for (int s = 0; s < settings.n_samples; ++s) {
    chain.sweep(settings.step_weights, settings.step_components, counts);
    out.logliks.push_back(chain.loglik());
    if (keep_samples) out.samples.push_back(chain.params());
  }
  if (counts.accepted == 0) throw NumericalError("Metropolis sampler accepted no proposal over a full rung; step size too large");
  out.acceptance = static_cast<double>(counts.accepted) / static_cast<double>(counts.proposed);
  return out;
}

inline void check_settings(const ChainSettings& s) {
  if (s.n_samples < 1 || s.burn_in < 0 || s.adapt_interval < 1)
    throw ContractViolation("ChainSettings: counts must be positive");
  if (!(s.step_weights > 0.0) || !(s.step_components > 0.0))
    throw ContractViolation("ChainSettings: step sizes must be positive");
}

}  // namespace detail

struct PosteriorSamples {
  std::vector<MixtureParams> samples;
  std::vector<double> logliks;
  double acceptance_rate = 0.0;
  ChainSettings final_settings;  // step sizes after burn-in adaptation
};

/// Random-walk Metropolis targeting pi(theta) p(X | theta)^beta, started from a prior draw.
inline PosteriorSamples mh_posterior_sample(const FamilySpec& spec, const Dataset& data, int K, const Priors& priors,
                                            ChainSettings settings, double beta) {
  detail::check_settings(settings);
  detail::TemperedChain chain(spec, data, K, priors, make_rng(settings.seed, "mh-chain"));
  chain.set_beta(beta);
  auto rung = detail::run_rung(chain, settings, true);
  return PosteriorSamples{std::move(rung.samples), std::move(rung.logliks), rung.acceptance, settings};
}

/// Batch-means standard error of the sample mean.
inline double batch_means_std_error(std::span<const double> values, int batches = 20) {
  const auto n = values.size();
  if (n < 2) return 0.0;
  const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(batches), n);
  const std::size_t size = n / b;
  std::vector<double> means;
  for (std::size_t j = 0; j < b; ++j) {
    double s = 0.0;
    for (std::size_t i = j * size; i < (j + 1) * size; ++i) s += values[i];
    means.push_back(s / static_cast<double>(size));
  }
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= static_cast<double>(means.size());
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  var /= static_cast<double>(means.size() - 1);
  return std::sqrt(var / static_cast<double>(means.size()));
}

/// Cubic ladder beta_j = (j / (R - 1))^3.
inline std::vector<double> cubic_ladder(int n_rungs) {
  if (n_rungs < 2) throw ContractViolation("stepping stone needs at least two rungs");
  std::vector<double> ladder;
  for (int j = 0; j < n_rungs; ++j) ladder.push_back(std::pow(static_cast<double>(j) / (n_rungs - 1), 3));
  return ladder;
}

/// Stepping-stone combination of per-rung log-likelihood samples. rung_logliks[j] holds
/// draws at ladder[j] for j < ladder.size() - 1. Standard error by the delta method with
/// batch-means variances.
inline EvidenceEstimate stepping_stone_from_logliks(const std::vector<double>& ladder,
                                                    const std::vector<std::vector<double>>& rung_logliks,
                                                    int batches = 20) {
  if (ladder.size() < 2 || rung_logliks.size() + 1 != ladder.size())
    throw ContractViolation("stepping_stone_from_logliks: need one sample set per rung below the top");
  EvidenceEstimate est;
  est.ladder = ladder;
  double variance = 0.0;
  for (std::size_t j = 0; j + 1 < ladder.size(); ++j) {
    const double delta = ladder[j + 1] - ladder[j];
    const auto& ll = rung_logliks[j];
    if (ll.empty()) throw ContractViolation("stepping_stone_from_logliks: empty rung");
    double top = -std::numeric_limits<double>::infinity();
    for (double v : ll) top = std::max(top, delta * v);
    std::vector<double> scaled;
    scaled.reserve(ll.size());
    double mean = 0.0;
    for (double v : ll) {
      scaled.push_back(std::exp(delta * v - top));
      mean += scaled.back();
    }
    mean /= static_cast<double>(ll.size());
    const double log_ratio = top + std::log(mean);
    est.rung_log_ratios.push_back(log_ratio);
    est.log_evidence += log_ratio;
    const double se = batch_means_std_error(scaled, batches) / mean;
    variance += se * se;
  }
  est.std_error = std::sqrt(variance);
  return est;
}

/// Stepping-stone estimate of log evidence. Rungs run in order, each starting from the
/// previous rung's final state and step sizes.
inline EvidenceEstimate stepping_stone_evidence(const FamilySpec& spec, const Dataset& data, int K,
                                                const Priors& priors, ChainSettings settings, int n_rungs) {
  detail::check_settings(settings);
  const std::vector<double> ladder = cubic_ladder(n_rungs);
  detail::TemperedChain chain(spec, data, K, priors, make_rng(settings.seed, "stepping-stone"));
  std::vector<std::vector<double>> logliks;
  std::vector<double> acceptance;
  const std::uint64_t seed = settings.seed;
  const int n_samples = settings.n_samples;
  const int burn_in = settings.burn_in;
  for (std::size_t j = 0; j + 1 < ladder.size(); ++j) {
    chain.set_beta(ladder[j]);
    auto rung = detail::run_rung(chain, settings, false);
    logliks.push_back(std::move(rung.logliks));
    acceptance.push_back(rung.acceptance);
  }
  EvidenceEstimate est = stepping_stone_from_logliks(ladder, logliks);
  est.acceptance_rates = std::move(acceptance);
  est.n_samples = n_samples;
  est.burn_in = burn_in;
  est.seed = seed;
  return est;
}

/// RLCT of a univariate location-Gaussian mixture with K components when the truth has K*.
inline double rlct_location_gaussian(int K, int K_star) {
  if (K_star < 1 || K < K_star) throw ContractViolation("rlct_location_gaussian: need K >= K* >= 1");
  const int budget = 2 * (K - K_star + 1);
  int j = 1;
  while ((j + 1) + (j + 1) * (j + 1) <= budget) ++j;
  return K_star - 1 + static_cast<double>(j + j * j + budget) / (4.0 * (j + 1));
}

/// log p*(X) - lambda log n, multiplicity term dropped.
inline double theoretical_evidence_curve(double loglik_at_truth, int K, int K_star, Eigen::Index n) {
  if (n < 1) throw ContractViolation("theoretical_evidence_curve: n must be >= 1");
  return loglik_at_truth - rlct_location_gaussian(K, K_star) * std::log(static_cast<double>(n));
}

}  // namespace vbmix
