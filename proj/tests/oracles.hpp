#pragma once

// Independent reference computations shared by unit tests and the acceptance binary.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "vbmix/mixture.hpp"

namespace oracle {

inline double ground(const vbmix::MixingMeasure& G, const vbmix::MixingMeasure& H, int i, int j, int r) {
  return std::pow((G.atoms[i] - H.atoms[j]).norm(), r);
}

/// 2x2 couplings form the segment q11 = t in [max(0, a1 - b2), min(a1, b1)]; the cost is linear
/// in t, so the minimum is at an endpoint. A dense scan of t guards against a wrong endpoint.
inline double brute_force_2x2(const vbmix::MixingMeasure& G, const vbmix::MixingMeasure& H, int r) {
  const double a1 = G.masses[0], b1 = H.masses[0];
  const double lo = std::max(0.0, a1 - H.masses[1]), hi = std::min(a1, b1);
  const auto cost = [&](double t) {
    return t * ground(G, H, 0, 0, r) + (a1 - t) * ground(G, H, 0, 1, r) + (b1 - t) * ground(G, H, 1, 0, r) +
           (1 - a1 - b1 + t) * ground(G, H, 1, 1, r);
  };
  double best = std::min(cost(lo), cost(hi));
  for (int s = 0; s <= 1000; ++s) best = std::min(best, cost(lo + (hi - lo) * s / 1000.0));
  return std::pow(best, 1.0 / r);
}

/// Exact optimum over couplings by enumerating basic solutions: every vertex of the transport
/// polytope is supported on at most m + n - 1 cells, so try every such support.
inline double vertex_enumeration(const vbmix::MixingMeasure& G, const vbmix::MixingMeasure& H, int r) {
  const int m = static_cast<int>(G.size()), n = static_cast<int>(H.size());
  const int cells = m * n, basis = m + n - 1;
  Eigen::VectorXd rhs(m + n);
  for (int i = 0; i < m; ++i) rhs[i] = G.masses[i];
  for (int j = 0; j < n; ++j) rhs[m + j] = H.masses[j];
  double best = INFINITY;
  for (unsigned mask = 0; mask < (1u << cells); ++mask) {
    if (__builtin_popcount(mask) != basis) continue;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + n, basis);
    std::vector<int> cols;
    for (int c = 0; c < cells; ++c)
      if (mask & (1u << c)) {
        A(c / n, static_cast<int>(cols.size())) = 1.0;
        A(m + c % n, static_cast<int>(cols.size())) = 1.0;
        cols.push_back(c);
      }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.rank() < basis) continue;
    const Eigen::VectorXd q = lu.solve(rhs);
    if ((A * q - rhs).norm() > 1e-12 || q.minCoeff() < -1e-14) continue;
    double cost = 0;
    for (int t = 0; t < basis; ++t) cost += q[t] * ground(G, H, cols[t] / n, cols[t] % n, r);
    best = std::min(best, cost);
  }
  return std::pow(best, 1.0 / r);
}

/// log p(X) for x_i ~ N(mu, s2 I), mu ~ N(m0 1, I / tau0). Each coordinate is N(m0 1, s2 I_n + 11^T / tau0),
/// evaluated with the determinant lemma and Sherman-Morrison.
inline double gaussian_log_evidence(const Eigen::MatrixXd& x, double s2, double tau0, const Eigen::VectorXd& m0) {
  const double n = static_cast<double>(x.rows());
  const double c = 1.0 / tau0;
  double total = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd r = x.col(j).array() - m0[j];
    const double logdet = n * std::log(s2) + std::log1p(n * c / s2);
    const double quad = r.squaredNorm() / s2 - (c / (s2 * s2)) * r.sum() * r.sum() / (1.0 + n * c / s2);
    total += -0.5 * (n * std::log(2 * M_PI) + logdet + quad);
  }
  return total;
}

}  // namespace oracle
