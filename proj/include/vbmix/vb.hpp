#pragma once

// Coordinate ascent variational inference for finite mixtures under the block mean-field
// family q(w) q(eta) q(S). Given responsibilities p_ik the optimal blocks are
//   q(w)     = Dir(n_k + phi0),                n_k = sum_i p_ik
//   q(eta_k) = conjugate prior updated with (n_k, sum_i p_ik T(x_i))
// and given those blocks the optimal responsibilities are
//   p_ik ∝ exp{ Psi(alpha_k) - Psi(sum alpha) + E_q[log g(x_i; eta_k)] }.
// With q(S) at its optimum the ELBO equals -KL(q(w)||pi) - sum_k KL(q(eta_k)||pi) + log C_Q,
// log C_Q = sum_i log sum_k exp{...}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vbmix/errors.hpp"
#include "vbmix/family.hpp"
#include "vbmix/mixture.hpp"
#include "vbmix/numerics.hpp"
#include "vbmix/random.hpp"

namespace vbmix {

struct DirichletWeightPrior {
  double phi0 = 1.0;
};

struct Priors {
  DirichletWeightPrior weights;
  ComponentPrior component;
};

/// Symmetric Dir(phi0) on weights with the family's default component prior.
inline Priors make_priors(const FamilySpec& spec, double phi0) {
  if (!(phi0 > 0.0)) throw ContractViolation("phi0 must be positive");
  return Priors{{phi0}, default_component_prior(spec)};
}

using Responsibilities = Eigen::MatrixXd;

struct ComponentBlocks {
  Eigen::VectorXd counts;           // n_k
  Eigen::VectorXd dirichlet_alpha;  // n_k + phi0
  std::vector<ComponentPosterior> posteriors;
};

struct VariationalState {
  Responsibilities responsibilities;  // q(S), optimal for the blocks below
  Eigen::VectorXd counts;             // pseudo-counts that define dirichlet_alpha
  Eigen::VectorXd dirichlet_alpha;
  std::vector<ComponentPosterior> component_posteriors;
  std::vector<double> elbo_trace;  // one entry per sweep
};

struct CaviOptions {
  double tol = 1e-8;  // relative ELBO change between sweeps
  int max_iter = 500;
};

struct FitResult {
  VariationalState state;
  double elbo = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd weight_means;                // alpha_k / sum alpha
  std::vector<Eigen::VectorXd> component_means;
  int k_init = 0;                              // winning initialization
  std::uint64_t init_seed = 0;
  std::vector<double> restart_elbos;           // filled by fit_best, indexed by k_init - 1

  int num_components() const { return static_cast<int>(weight_means.size()); }
};

/// Random even split of the n rows into k_init groups, one-hot in the first k_init columns.
inline Responsibilities init_responsibilities(Eigen::Index n, int K, int k_init, std::uint64_t seed) {
  if (K < 1 || k_init < 1 || k_init > K)
    throw ContractViolation("init_responsibilities: need 1 <= k_init <= K");
  if (n < K) throw ContractViolation("init_responsibilities: need n >= K");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  Responsibilities P = Responsibilities::Zero(n, K);
  for (std::size_t i = 0; i < perm.size(); ++i) P(perm[i], static_cast<Eigen::Index>(i % static_cast<std::size_t>(k_init))) = 1.0;
  return P;
}

/// Optimal q(w) and q(eta) given responsibilities.
inline ComponentBlocks update_component_blocks(const FamilySpec& spec, const Dataset& data,
                                               const Responsibilities& P, const Priors& priors) {
  if (P.rows() != data.size()) throw ContractViolation("responsibilities have wrong row count");
  const Eigen::Index K = P.cols();
  ComponentBlocks blocks;
  blocks.counts = P.colwise().sum().transpose();
  blocks.dirichlet_alpha = blocks.counts.array() + priors.weights.phi0;
  // columns of X' P are sum_i p_ik x_i
  Eigen::MatrixXd weighted = data.x.transpose() * P;
  if (spec.kind == FamilyKind::exponential_rate) weighted = -weighted;
  blocks.posteriors.reserve(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    blocks.posteriors.push_back(
        posterior_update(spec, priors.component, WeightedStats{blocks.counts[k], weighted.col(k)}));
  }
  return blocks;
}

struct ResponsibilityUpdate {
  Responsibilities responsibilities;
  Eigen::VectorXd log_normalizers;  // per-row log sum_k exp{...}; their sum is log C_Q
};

inline ResponsibilityUpdate compute_responsibilities(const FamilySpec& spec, const Dataset& data,
                                                     const Eigen::VectorXd& alpha,
                                                     const std::vector<ComponentPosterior>& posts) {
  if (static_cast<std::size_t>(alpha.size()) != posts.size())
    throw ContractViolation("alpha and component posteriors differ in length");
  const Eigen::Index K = alpha.size();
  Eigen::MatrixXd logits = expected_log_density_matrix(spec, data.x, posts);
  const double psi_total = digamma(alpha.sum());
  for (Eigen::Index k = 0; k < K; ++k) logits.col(k).array() += digamma(alpha[k]) - psi_total;

  ResponsibilityUpdate out;
  out.log_normalizers.resize(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double top = logits.row(i).maxCoeff();
    const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
    out.log_normalizers[i] = lse;
    logits.row(i) = (logits.row(i).array() - lse).exp();
  }
  out.responsibilities = std::move(logits);
  return out;
}

/// Optimal q(S) given q(w), q(eta).
inline Responsibilities update_responsibilities(const FamilySpec& spec, const Dataset& data,
                                                const Eigen::VectorXd& alpha,
                                                const std::vector<ComponentPosterior>& posts) {
  return compute_responsibilities(spec, data, alpha, posts).responsibilities;
}

namespace detail {

inline double elbo_from_log_cq(const FamilySpec& spec, const Eigen::VectorXd& alpha,
                               const std::vector<ComponentPosterior>& posts, const Priors& priors,
                               double log_cq) {
  double value = log_cq - dirichlet_kl(std::span<const double>(alpha.data(), static_cast<std::size_t>(alpha.size())),
                                       priors.weights.phi0);
  for (const auto& q : posts) value -= kl_to_prior(spec, q, priors.component);
  return value;
}

}  // namespace detail

/// ELBO of (q(w), q(eta)) with q(S) at its optimum. P must equal
/// update_responsibilities(alpha, posts); only its shape is checked.
inline double elbo(const FamilySpec& spec, const Dataset& data, const Responsibilities& P,
                   const Eigen::VectorXd& alpha, const std::vector<ComponentPosterior>& posts,
                   const Priors& priors) {
  if (P.rows() != data.size() || P.cols() != alpha.size())
    throw ContractViolation("elbo: responsibilities shape does not match data and alpha");
  const auto update = compute_responsibilities(spec, data, alpha, posts);
  return detail::elbo_from_log_cq(spec, alpha, posts, priors, update.log_normalizers.sum());
}

/// Alternates block and responsibility updates from `init` until the relative ELBO change
/// drops below options.tol (relative to max(|ELBO|, 1)) or max_iter sweeps have run.
inline FitResult run_cavi(const FamilySpec& spec, const Dataset& data, int K, const Priors& priors,
                          const Responsibilities& init, const CaviOptions& options = {}) {
  if (K < 1) throw ContractViolation("run_cavi: K must be >= 1");
  if (!(options.tol > 0.0)) throw ContractViolation("run_cavi: tol must be positive");
  if (options.max_iter < 1) throw ContractViolation("run_cavi: max_iter must be >= 1");
  if (init.rows() != data.size() || init.cols() != K)
    throw ContractViolation("run_cavi: initial responsibilities must be n x K");

  FitResult fit;
  Responsibilities P = init;
  ComponentBlocks blocks;
  double previous = -std::numeric_limits<double>::infinity();
  for (int sweep = 1; sweep <= options.max_iter; ++sweep) {
    blocks = update_component_blocks(spec, data, P, priors);
    auto update = compute_responsibilities(spec, data, blocks.dirichlet_alpha, blocks.posteriors);
    const double value = detail::elbo_from_log_cq(spec, blocks.dirichlet_alpha, blocks.posteriors, priors,
                                                  update.log_normalizers.sum());
    if (!std::isfinite(value)) throw NumericalError("run_cavi: non-finite ELBO", sweep);
    fit.state.elbo_trace.push_back(value);
    P = std::move(update.responsibilities);
    fit.iterations = sweep;
    if (sweep > 1 && std::abs(value - previous) < options.tol * std::max(std::abs(value), 1.0)) {
      fit.converged = true;
      break;
    }
    previous = value;
  }

  fit.elbo = fit.state.elbo_trace.back();
  fit.state.responsibilities = std::move(P);
  fit.state.counts = std::move(blocks.counts);
  fit.state.dirichlet_alpha = std::move(blocks.dirichlet_alpha);
  fit.state.component_posteriors = std::move(blocks.posteriors);
  fit.weight_means = fit.state.dirichlet_alpha / fit.state.dirichlet_alpha.sum();
  for (const auto& q : fit.state.component_posteriors) fit.component_means.push_back(posterior_mean(spec, q));
  return fit;
}

/// Best-of-restarts CAVI: one run per k_init in 1..K, largest final ELBO wins, ties
/// (within 1e-9) go to the smallest k_init.
inline FitResult fit_best(const FamilySpec& spec, const Dataset& data, int K, const Priors& priors,
                          std::uint64_t seed, const CaviOptions& options = {}) {
  if (K < 1) throw ContractViolation("fit_best: K must be >= 1");
  std::optional<FitResult> best;
  std::vector<double> restart_elbos;
  std::optional<NumericalError> last_error;
  for (int k_init = 1; k_init <= K; ++k_init) {
    const std::uint64_t init_seed = derive_seed(seed, "cavi-restart", static_cast<std::uint64_t>(k_init));
    try {
      FitResult fit = run_cavi(spec, data, K, priors, init_responsibilities(data.size(), K, k_init, init_seed), options);
      fit.k_init = k_init;
      fit.init_seed = init_seed;
      restart_elbos.push_back(fit.elbo);
      if (!best || fit.elbo > best->elbo + 1e-9) best = std::move(fit);
    } catch (const NumericalError& e) {
      restart_elbos.push_back(std::numeric_limits<double>::quiet_NaN());
      last_error = e;
    }
  }
  if (!best) throw *last_error;
  best->restart_elbos = std::move(restart_elbos);
  return std::move(*best);
}

/// Plug-in mixture (w-bar, eta-bar) from a fit.
inline MixtureParams posterior_mean_params(const FamilySpec& spec, const FitResult& fit) {
  MixtureParams theta{spec, {}, fit.component_means};
  theta.weights.assign(fit.weight_means.data(), fit.weight_means.data() + fit.weight_means.size());
  return theta;
}

}  // namespace vbmix
