#pragma once

// Exact discrete optimal transport between two small discrete measures, solved as a linear
// program by a dense two-phase tableau simplex with Bland's rule (terminates under degeneracy).

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "vbmix/errors.hpp"

namespace vbmix {

struct LpSolution {
  Eigen::VectorXd x;
  double value = 0.0;
};

namespace detail {

class Tableau {
 public:
  Tableau(Eigen::MatrixXd t, std::vector<Eigen::Index> basis) : t_(std::move(t)), basis_(std::move(basis)) {}

  Eigen::MatrixXd& table() { return t_; }
  std::vector<Eigen::Index>& basis() { return basis_; }
  Eigen::Index rhs_col() const { return t_.cols() - 1; }

  void pivot(Eigen::Index row, Eigen::Index col) {
    t_.row(row) /= t_(row, col);
    for (Eigen::Index i = 0; i < t_.rows(); ++i) {
      if (i != row && t_(i, col) != 0.0) t_.row(i) -= t_(i, col) * t_.row(row);
    }
    basis_[static_cast<std::size_t>(row)] = col;
  }

  // Minimizes cost' x over columns [0, allowed_cols). Assumes a feasible basis.
  void minimize(const Eigen::VectorXd& cost, Eigen::Index allowed_cols, double eps) {
    const Eigen::Index m = t_.rows();
    for (int guard = 0; guard < 100000; ++guard) {
      Eigen::Index entering = -1;
      for (Eigen::Index j = 0; j < allowed_cols && entering < 0; ++j) {
        double reduced = cost[j];
        for (Eigen::Index i = 0; i < m; ++i) reduced -= cost[basis_[static_cast<std::size_t>(i)]] * t_(i, j);
        if (reduced < -eps) entering = j;
      }
      if (entering < 0) return;
      Eigen::Index leaving = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m; ++i) {
        if (t_(i, entering) > eps) {
          const double ratio = t_(i, rhs_col()) / t_(i, entering);
          if (ratio < best_ratio - eps ||
              (std::abs(ratio - best_ratio) <= eps && leaving >= 0 &&
               basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leaving)])) {
            best_ratio = std::min(ratio, best_ratio);
            leaving = i;
          }
        }
      }
      if (leaving < 0) throw NumericalError("simplex: unbounded linear program");
      pivot(leaving, entering);
    }
    throw NumericalError("simplex: iteration limit reached");
  }

 private:
  Eigen::MatrixXd t_;
  std::vector<Eigen::Index> basis_;
};

}  // namespace detail

/// min c'x subject to A x = b, x >= 0.
inline LpSolution solve_equality_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                                    double eps = 1e-12) {
  const Eigen::Index m = A.rows();
  const Eigen::Index nv = A.cols();
  if (b.size() != m || c.size() != nv) throw ContractViolation("solve_equality_lp: dimension mismatch");

  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, nv + m + 1);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const double sign = b[i] < 0.0 ? -1.0 : 1.0;
    t.row(i).head(nv) = sign * A.row(i);
    t(i, nv + i) = 1.0;
    t(i, nv + m) = sign * b[i];
    basis[static_cast<std::size_t>(i)] = nv + i;
  }
  detail::Tableau tab(std::move(t), std::move(basis));

  // phase I: drive the artificial variables to zero
  Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(nv + m);
  phase1.tail(m).setOnes();
  tab.minimize(phase1, nv + m, eps);
  double infeasibility = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    if (tab.basis()[static_cast<std::size_t>(i)] >= nv) infeasibility += tab.table()(i, tab.rhs_col());
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  if (infeasibility > 1e-9 * scale) throw ContractViolation("solve_equality_lp: infeasible constraints");

  // pivot remaining (zero-level) artificials out; rows where that is impossible are redundant
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (tab.basis()[static_cast<std::size_t>(i)] < nv) {
      keep.push_back(i);
      continue;
    }
    Eigen::Index col = -1;
    for (Eigen::Index j = 0; j < nv && col < 0; ++j)
      if (std::abs(tab.table()(i, j)) > 1e-9) col = j;
    if (col >= 0) {
      tab.pivot(i, col);
      keep.push_back(i);
    }
  }
  Eigen::MatrixXd reduced(static_cast<Eigen::Index>(keep.size()), nv + 1);
  std::vector<Eigen::Index> reduced_basis;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    reduced.row(static_cast<Eigen::Index>(r)).head(nv) = tab.table().row(keep[r]).head(nv);
    reduced(static_cast<Eigen::Index>(r), nv) = tab.table()(keep[r], tab.rhs_col());
    reduced_basis.push_back(tab.basis()[static_cast<std::size_t>(keep[r])]);
  }
  detail::Tableau phase2(std::move(reduced), std::move(reduced_basis));
  phase2.minimize(c, nv, eps);

  LpSolution sol;
  sol.x = Eigen::VectorXd::Zero(nv);
  for (std::size_t r = 0; r < phase2.basis().size(); ++r)
    sol.x[phase2.basis()[r]] = std::max(0.0, phase2.table()(static_cast<Eigen::Index>(r), nv));
  sol.value = c.dot(sol.x);
  return sol;
}

struct TransportPlan {
  Eigen::MatrixXd coupling;  // rows: source atoms, cols: target atoms
  double cost = 0.0;
};

/// Minimum-cost coupling with marginals a (rows) and b (cols).
inline TransportPlan solve_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::Index m = a.size();
  const Eigen::Index n = b.size();
  if (cost.rows() != m || cost.cols() != n) throw ContractViolation("solve_transport: cost shape mismatch");
  if (a.minCoeff() < 0.0 || b.minCoeff() < 0.0) throw ContractViolation("solve_transport: negative mass");
  if (std::abs(a.sum() - b.sum()) > 1e-9) throw ContractViolation("solve_transport: total masses differ");

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + n, m * n);
  Eigen::VectorXd c(m * n);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index v = i * n + j;
      A(i, v) = 1.0;
      A(m + j, v) = 1.0;
      c[v] = cost(i, j);
    }
  }
  Eigen::VectorXd rhs(m + n);
  rhs << a, b;
  const LpSolution sol = solve_equality_lp(A, rhs, c);
  TransportPlan plan;
  plan.coupling.resize(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) plan.coupling(i, j) = sol.x[i * n + j];
  plan.cost = std::max(0.0, sol.value);
  return plan;
}

}  // namespace vbmix
