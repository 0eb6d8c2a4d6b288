#pragma once

// Discrepancies between mixing measures and between mixture densities.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "vbmix/errors.hpp"
#include "vbmix/family.hpp"
#include "vbmix/mixture.hpp"
#include "vbmix/transport.hpp"

namespace vbmix {

/// r-th order Wasserstein distance between discrete measures, Euclidean ground metric.
inline double wasserstein(const MixingMeasure& G, const MixingMeasure& H, int r = 1) {
  if (r < 1) throw ContractViolation("wasserstein: order r must be >= 1");
  if (G.atoms.empty() || H.atoms.empty()) throw ContractViolation("wasserstein: empty measure");
  double total_g = 0.0, total_h = 0.0;
  for (double w : G.masses) total_g += w;
  for (double w : H.masses) total_h += w;
  if (std::abs(total_g - total_h) > 1e-9) throw ContractViolation("wasserstein: total masses differ");

  const auto m = static_cast<Eigen::Index>(G.size());
  const auto n = static_cast<Eigen::Index>(H.size());
  Eigen::MatrixXd cost(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      cost(i, j) = std::pow((G.atoms[static_cast<std::size_t>(i)] - H.atoms[static_cast<std::size_t>(j)]).norm(), r);
  const Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(G.masses.data(), m);
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(H.masses.data(), n);
  b *= total_g / total_h;  // absorb sub-tolerance rounding in the marginals
  return std::pow(solve_transport(cost, a, b).cost, 1.0 / r);
}

/// inf over disjoint index sets I_1..I_{K*} of sum_k |sum_{j in I_k} w_j - w*_k|.
/// Exhaustive over the (K*+1)^K assignments of atoms to a group or to none, with pruning.
inline double merged_weight_discrepancy(const MixingMeasure& G, const MixingMeasure& G_star) {
  const std::size_t K = G.size();
  const std::size_t K_star = G_star.size();
  if (K > 12 || K_star > 12) throw CapacityError("merged_weight_discrepancy: at most 12 atoms per measure");
  if (K_star == 0) throw ContractViolation("merged_weight_discrepancy: empty target measure");

  std::vector<double> sums(K_star, 0.0);
  double best = std::numeric_limits<double>::infinity();
  // overshoot only grows as atoms are added, so it bounds the final objective from below
  const auto overshoot = [&] {
    double lb = 0.0;
    for (std::size_t k = 0; k < K_star; ++k) lb += std::max(0.0, sums[k] - G_star.masses[k]);
    return lb;
  };
  std::function<void(std::size_t)> assign = [&](std::size_t atom) {
    if (overshoot() >= best) return;
    if (atom == K) {
      double obj = 0.0;
      for (std::size_t k = 0; k < K_star; ++k) obj += std::abs(sums[k] - G_star.masses[k]);
      best = std::min(best, obj);
      return;
    }
    for (std::size_t k = 0; k < K_star; ++k) {
      sums[k] += G.masses[atom];
      assign(atom + 1);
      sums[k] -= G.masses[atom];
    }
    assign(atom + 1);  // atom left out of every group
  };
  assign(0);
  return best;
}

/// Sum of the K - K* smallest weights.
inline double redundant_mass(std::vector<double> weights, int K_star) {
  if (K_star < 0 || static_cast<std::size_t>(K_star) > weights.size())
    throw ContractViolation("redundant_mass: need K >= K*");
  std::sort(weights.begin(), weights.end());
  double mass = 0.0;
  for (std::size_t k = 0; k + static_cast<std::size_t>(K_star) < weights.size(); ++k) mass += weights[k];
  return mass;
}

/// min over injective matchings sigma of max_{k <= K*} |eta_bar_{sigma(k)} - eta*_k|.
inline double component_param_error(const MixtureParams& theta_bar, const MixtureParams& theta_star) {
  const std::size_t K = theta_bar.size();
  const std::size_t K_star = theta_star.size();
  if (K > 10) throw CapacityError("component_param_error: at most 10 fitted components");
  if (K < K_star) throw ContractViolation("component_param_error: need K >= K*");

  Eigen::MatrixXd dist(static_cast<Eigen::Index>(K_star), static_cast<Eigen::Index>(K));
  for (std::size_t s = 0; s < K_star; ++s)
    for (std::size_t k = 0; k < K; ++k)
      dist(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k)) =
          (theta_star.components[s] - theta_bar.components[k]).norm();

  std::vector<bool> used(K, false);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, double)> match = [&](std::size_t s, double worst) {
    if (worst >= best) return;
    if (s == K_star) {
      best = worst;
      return;
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (used[k]) continue;
      used[k] = true;
      match(s + 1, std::max(worst, dist(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k))));
      used[k] = false;
    }
  };
  match(0, 0.0);
  return K_star == 0 ? 0.0 : best;
}

struct QuadratureSpec {
  double tol = 1e-10;  // absolute tolerance on the integral of |p - p*|
  int initial_panels = 256;
  int max_depth = 40;
};

namespace detail {

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                               double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// integral of f over [a, b] by adaptive Simpson on a uniform set of starting panels.
inline double integrate(const std::function<double(double)>& f, double a, double b, const QuadratureSpec& q = {}) {
  const double h = (b - a) / q.initial_panels;
  double total = 0.0;
  for (int p = 0; p < q.initial_panels; ++p) {
    const double lo = a + p * h, hi = lo + h;
    const double flo = f(lo), fhi = f(hi), fmid = f(0.5 * (lo + hi));
    const double whole = h / 6.0 * (flo + 4.0 * fmid + fhi);
    total += detail::adaptive_simpson(f, lo, hi, flo, fmid, fhi, whole, q.tol / q.initial_panels, q.max_depth);
  }
  return total;
}

/// Support interval outside which every component of either mixture has negligible mass.
inline std::pair<double, double> integration_domain_1d(const MixtureParams& a, const MixtureParams& b) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const MixtureParams* theta : {&a, &b}) {
    for (const auto& eta : theta->components) {
      if (theta->spec.kind == FamilyKind::gaussian_location) {
        const double sd = std::sqrt(theta->spec.sigma2);
        lo = std::min(lo, eta[0] - 10.0 * sd);
        hi = std::max(hi, eta[0] + 10.0 * sd);
      } else {
        // tail mass exp(-40) beyond 40 means
        lo = 0.0;
        hi = std::max(hi, 40.0 / eta[0]);
      }
    }
  }
  return {lo, hi};
}

/// 1/2 integral |p(x | theta) - p(x | theta_star)| dx for one-dimensional continuous families.
inline double tv_distance_1d(const MixtureParams& theta, const MixtureParams& theta_star, const QuadratureSpec& q = {}) {
  for (const MixtureParams* t : {&theta, &theta_star}) {
    t->validate();
    const bool ok = (t->spec.kind == FamilyKind::gaussian_location && t->spec.dim == 1) ||
                    t->spec.kind == FamilyKind::exponential_rate;
    if (!ok) throw CapacityError("tv_distance_1d: needs a one-dimensional continuous family");
  }
  if (theta.spec.kind != theta_star.spec.kind) throw ContractViolation("tv_distance_1d: families differ");
  const auto density = [](const MixtureParams& t, double x) {
    return std::exp(mixture_log_density(t, Eigen::VectorXd::Constant(1, x)));
  };
  const auto [lo, hi] = integration_domain_1d(theta, theta_star);
  const double integral =
      integrate([&](double x) { return std::abs(density(theta, x) - density(theta_star, x)); }, lo, hi, q);
  return std::clamp(0.5 * integral, 0.0, 1.0);
}

}  // namespace vbmix
