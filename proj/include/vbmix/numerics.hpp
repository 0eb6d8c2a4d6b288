#pragma once

// Special functions and log-space primitives used by every variational formula.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "vbmix/errors.hpp"

namespace vbmix {

namespace detail {

// Recurrence shifts the argument to at least this value before the asymptotic series.
inline constexpr double kAsymptoticThreshold = 8.0;

inline void require_positive(double x, const char* fn) {
  if (!(x > 0.0) || std::isinf(x)) {
    throw DomainError(std::string(fn) + ": argument must be positive and finite, got " +
                      std::to_string(x));
  }
}

}  // namespace detail

/// log Gamma(x) for x > 0.
///
/// Upward recurrence Gamma(x+1) = x Gamma(x) until x >= 8, then the Stirling series
/// truncated after the x^-13 term (truncation error below 1e-15 at x = 8).
inline double log_gamma(double x) {
  detail::require_positive(x, "log_gamma");
  double product = 1.0;
  while (x < detail::kAsymptoticThreshold) {
    product *= x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli terms B_{2k} / (2k (2k-1) x^{2k-1}), k = 1..7.
  const double series =
      inv * (1.0 / 12.0 +
             inv2 * (-1.0 / 360.0 +
                     inv2 * (1.0 / 1260.0 +
                             inv2 * (-1.0 / 1680.0 +
                                     inv2 * (1.0 / 1188.0 +
                                             inv2 * (-691.0 / 360360.0 + inv2 * (1.0 / 156.0)))))));
  const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
  return (x - 0.5) * std::log(x) - x + half_log_two_pi + series - std::log(product);
}

/// Psi(x) = Gamma'(x) / Gamma(x) for x > 0.
inline double digamma(double x) {
  detail::require_positive(x, "digamma");
  double shift = 0.0;
  while (x < detail::kAsymptoticThreshold) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv2 = 1.0 / (x * x);
  // B_{2k} / (2k x^{2k}), k = 1..7.
  const double series =
      inv2 * (1.0 / 12.0 +
              inv2 * (-1.0 / 120.0 +
                      inv2 * (1.0 / 252.0 +
                              inv2 * (-1.0 / 240.0 +
                                      inv2 * (1.0 / 132.0 +
                                              inv2 * (-691.0 / 32760.0 + inv2 * (1.0 / 12.0)))))));
  return shift + std::log(x) - 0.5 / x - series;
}

/// log sum_i exp(v_i), stable for very negative or very large entries.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw ContractViolation("log_sum_exp: empty input");
  const double top = *std::max_element(v.begin(), v.end());
  if (std::isinf(top)) return top;
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - top);
  return top + std::log(sum);
}

/// KL( Dir(alpha) || Dir(prior) ) for matching lengths.
inline double dirichlet_kl(std::span<const double> alpha, std::span<const double> prior) {
  if (alpha.size() != prior.size() || alpha.empty()) {
    throw ContractViolation("dirichlet_kl: concentration vectors must be nonempty and equal length");
  }
  double alpha_sum = 0.0;
  double prior_sum = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    if (!(alpha[k] > 0.0) || !(prior[k] > 0.0)) {
      throw DomainError("dirichlet_kl: concentrations must be positive");
    }
    alpha_sum += alpha[k];
    prior_sum += prior[k];
  }
  const double psi_sum = digamma(alpha_sum);
  double kl = log_gamma(alpha_sum) - log_gamma(prior_sum);
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    kl += log_gamma(prior[k]) - log_gamma(alpha[k]) +
          (alpha[k] - prior[k]) * (digamma(alpha[k]) - psi_sum);
  }
  // The closed form can dip a few ulps below zero when alpha == prior.
  return std::max(kl, 0.0);
}

/// KL( Dir(alpha) || Dir(phi0, ..., phi0) ).
inline double dirichlet_kl(std::span<const double> alpha, double phi0) {
  if (!(phi0 > 0.0)) throw DomainError("dirichlet_kl: phi0 must be positive");
  std::vector<double> prior(alpha.size(), phi0);
  return dirichlet_kl(alpha, std::span<const double>(prior));
}

}  // namespace vbmix
