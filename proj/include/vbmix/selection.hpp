#pragma once

// Model-order selection: ELBO sweep over K, the EM/BIC baseline, and the theoretical
// log n coefficients of the maximal ELBO.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vbmix/errors.hpp"
#include "vbmix/family.hpp"
#include "vbmix/mixture.hpp"
#include "vbmix/random.hpp"
#include "vbmix/vb.hpp"

namespace vbmix {

/// Index of the largest value; a later entry must beat the incumbent by more than tie_tol.
inline std::size_t argmax_first(std::span<const double> values, double tie_tol = 1e-9) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isnan(values[i])) continue;
    if (!best || values[i] > values[*best] + tie_tol) best = i;
  }
  if (!best) throw ContractViolation("argmax_first: no comparable values");
  return *best;
}

/// Ordinary least-squares slope of y on x.
inline double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractViolation("least_squares_slope: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw ContractViolation("least_squares_slope: x values are all equal");
  return sxy / sxx;
}

struct EmOptions {
  int restarts = 3;
  double tol = 1e-8;
  int max_iter = 500;
  int max_reinit = 10;  // fresh initializations allowed per restart after degeneracy
};

struct EmResult {
  MixtureParams theta;
  double loglik = 0.0;
  std::vector<double> loglik_trace;
  int iterations = 0;
  bool converged = false;
  int restart = 0;
};

namespace detail {

// Returns false when a component collapsed (sum_i p_ik below the floor).
inline bool em_m_step(const FamilySpec& spec, const Dataset& data, const Eigen::MatrixXd& P, MixtureParams& theta) {
  const Eigen::Index K = P.cols();
  const double n = static_cast<double>(data.size());
  const Eigen::VectorXd counts = P.colwise().sum().transpose();
  const Eigen::MatrixXd weighted = data.x.transpose() * P;  // sum_i p_ik x_i
  const double floor = 1e-10 * std::max(n, 1.0);
  for (Eigen::Index k = 0; k < K; ++k) {
    if (!(counts[k] > floor)) return false;
    const auto uk = static_cast<std::size_t>(k);
    theta.weights[uk] = counts[k] / n;
    switch (spec.kind) {
      case FamilyKind::gaussian_location: theta.components[uk] = weighted.col(k) / counts[k]; break;
      case FamilyKind::exponential_rate:
        if (!(weighted(0, k) > 0.0)) return false;
        theta.components[uk] = Eigen::VectorXd::Constant(1, counts[k] / weighted(0, k));
        break;
      case FamilyKind::multinomial: theta.components[uk] = weighted.col(k) / (spec.trials * counts[k]); break;
    }
  }
  // renormalize against rounding so validate() accepts the weights
  double total = 0.0;
  for (double w : theta.weights) total += w;
  for (double& w : theta.weights) w /= total;
  return true;
}

// E-step: responsibilities in place, returns the log-likelihood of theta.
inline double em_e_step(const FamilySpec& spec, const Dataset& data, const MixtureParams& theta, Eigen::MatrixXd& P) {
  Eigen::MatrixXd lp = log_density_matrix(spec, data.x, theta.components);
  for (std::size_t k = 0; k < theta.size(); ++k) lp.col(static_cast<Eigen::Index>(k)).array() += std::log(theta.weights[k]);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < lp.rows(); ++i) {
    const double top = lp.row(i).maxCoeff();
    const double lse = top + std::log((lp.row(i).array() - top).exp().sum());
    ll += lse;
    lp.row(i) = (lp.row(i).array() - lse).exp();
  }
  P = std::move(lp);
  return ll;
}

}  // namespace detail

/// Maximum-likelihood fit by EM, best of `restarts` random even-split initializations.
inline EmResult em_fit(const FamilySpec& spec, const Dataset& data, int K, std::uint64_t seed,
                       const EmOptions& options = {}) {
  if (K < 1) throw ContractViolation("em_fit: K must be >= 1");
  if (options.restarts < 1) throw ContractViolation("em_fit: restarts must be >= 1");
  std::optional<EmResult> best;
  for (int r = 0; r < options.restarts; ++r) {
    for (int attempt = 0; attempt <= options.max_reinit; ++attempt) {
      const auto init_seed = derive_seed(seed, "em-restart", static_cast<std::uint64_t>(r * (options.max_reinit + 1) + attempt));
      Eigen::MatrixXd P = init_responsibilities(data.size(), K, K, init_seed);
      EmResult run;
      run.restart = r;
      run.theta = MixtureParams{spec, std::vector<double>(static_cast<std::size_t>(K)),
                                std::vector<Eigen::VectorXd>(static_cast<std::size_t>(K))};
      bool ok = detail::em_m_step(spec, data, P, run.theta);
      double previous = -std::numeric_limits<double>::infinity();
      for (int it = 1; ok && it <= options.max_iter; ++it) {
        const double ll = detail::em_e_step(spec, data, run.theta, P);
        if (!std::isfinite(ll)) {
          ok = false;
          break;
        }
        run.loglik_trace.push_back(ll);
        run.iterations = it;
        if (it > 1 && std::abs(ll - previous) < options.tol * std::max(std::abs(ll), 1.0)) {
          run.converged = true;
          break;
        }
        previous = ll;
        MixtureParams next = run.theta;
        if (!detail::em_m_step(spec, data, P, next)) {
          ok = false;
          break;
        }
        run.theta = std::move(next);
      }
      if (!ok) continue;
      // the trace ends on the log-likelihood of the returned parameters
      run.loglik = run.loglik_trace.back();
      if (!best || run.loglik > best->loglik + 1e-9) best = std::move(run);
      break;
    }
  }
  if (!best) throw NumericalError("em_fit: every restart produced a degenerate component");
  return std::move(*best);
}

/// Penalty (d K + K - 1)/2 * log n of the BIC.
inline double bic_penalty(const FamilySpec& spec, int K, Eigen::Index n) {
  const double params = static_cast<double>(spec.free_parameters()) * K + K - 1;
  return 0.5 * params * std::log(static_cast<double>(n));
}

/// loglik - (d K + K - 1)/2 log n.
inline double bic(const FamilySpec& spec, const Dataset& data, int K, const EmResult& em) {
  if (static_cast<int>(em.theta.size()) != K) throw ContractViolation("bic: EM result has a different K");
  return em.loglik - bic_penalty(spec, K, data.size());
}

/// Coefficient lambda of log n in the maximal ELBO for K >= K* components.
inline double predicted_lambda(int K, int K_star, int d, double phi0) {
  if (K_star < 1 || K < K_star) throw ContractViolation("predicted_lambda: need K >= K* >= 1");
  if (d < 1 || !(phi0 > 0.0)) throw ContractViolation("predicted_lambda: need d >= 1 and phi0 > 0");
  if (phi0 <= (d + 1) / 2.0) return (K - K_star) * phi0 + (d * K_star + K_star - 1) / 2.0;
  return (d * K + K - 1) / 2.0;
}

/// Slope of (L_K - L_{K*}) / log n in K: -min{phi0, (d+1)/2}.
inline double predicted_slope(double phi0, int d) {
  if (d < 1 || !(phi0 > 0.0)) throw ContractViolation("predicted_slope: need d >= 1 and phi0 > 0");
  return -std::min(phi0, (d + 1) / 2.0);
}

struct SelectionRecord {
  int k = 0;
  double elbo = 0.0;
  double bic = std::numeric_limits<double>::quiet_NaN();
  double loglik = std::numeric_limits<double>::quiet_NaN();  // at the EM MLE
  int k_init = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> restart_elbos;

  bool operator==(const SelectionRecord&) const = default;
};

struct SelectionReport {
  std::vector<SelectionRecord> per_k;  // ascending k from 1
  int k_hat_elbo = 0;
  int k_hat_bic = 0;  // 0 when BIC was not computed
  Eigen::Index n = 0;
  double phi0 = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const SelectionReport&) const = default;
};

struct SelectOptions {
  CaviOptions cavi;
  bool with_bic = true;
  EmOptions em;
};

/// Re-derives k_hat_elbo / k_hat_bic from the recorded values.
inline void finalize_report(SelectionReport& report) {
  std::sort(report.per_k.begin(), report.per_k.end(), [](const auto& a, const auto& b) { return a.k < b.k; });
  std::vector<double> elbos, bics;
  for (const auto& r : report.per_k) {
    elbos.push_back(r.elbo);
    bics.push_back(r.bic);
  }
  report.k_hat_elbo = report.per_k.empty() ? 0 : report.per_k[argmax_first(elbos)].k;
  const bool have_bic = std::any_of(bics.begin(), bics.end(), [](double b) { return !std::isnan(b); });
  report.k_hat_bic = have_bic ? report.per_k[argmax_first(bics)].k : 0;
}

/// ELBO sweep over K = 1..K_max (plus EM/BIC when requested).
inline SelectionReport select_k(const FamilySpec& spec, const Dataset& data, int K_max, const Priors& priors,
                                std::uint64_t seed, const SelectOptions& options = {}) {
  if (K_max < 1) throw ContractViolation("select_k: K_max must be >= 1");
  if (data.size() < K_max) throw ContractViolation("select_k: need n >= K_max");
  SelectionReport report;
  report.n = data.size();
  report.phi0 = priors.weights.phi0;
  report.seed = seed;
  for (int K = 1; K <= K_max; ++K) {
    SelectionRecord rec;
    rec.k = K;
    FitResult fit;
    try {
      fit = fit_best(spec, data, K, priors, derive_seed(seed, "select-cavi", static_cast<std::uint64_t>(K)), options.cavi);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("select_k: K=") + std::to_string(K) + ": " + e.what());
    }
    rec.elbo = fit.elbo;
    rec.k_init = fit.k_init;
    rec.iterations = fit.iterations;
    rec.converged = fit.converged;
    rec.restart_elbos = fit.restart_elbos;
    if (options.with_bic) {
      const EmResult em = em_fit(spec, data, K, derive_seed(seed, "select-em", static_cast<std::uint64_t>(K)), options.em);
      rec.loglik = em.loglik;
      rec.bic = bic(spec, data, K, em);
    }
    report.per_k.push_back(std::move(rec));
  }
  finalize_report(report);
  return report;
}

}  // namespace vbmix
