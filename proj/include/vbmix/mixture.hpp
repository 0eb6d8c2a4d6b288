#pragma once

// Finite mixtures sum_k w_k g(x; eta_k), their samplers, and the induced mixing measure.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "vbmix/errors.hpp"
#include "vbmix/family.hpp"
#include "vbmix/numerics.hpp"
#include "vbmix/random.hpp"

namespace vbmix {

/// n observations stored row-wise; labels (0-based component index) when simulated.
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<int> labels;

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
  bool has_labels() const { return !labels.empty(); }

  /// Rows selected by index, labels carried along.
  Dataset subset(const std::vector<Eigen::Index>& rows) const {
    Dataset out;
    out.x.resize(static_cast<Eigen::Index>(rows.size()), dim());
    for (std::size_t r = 0; r < rows.size(); ++r) out.x.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
    if (has_labels()) {
      out.labels.reserve(rows.size());
      for (auto r : rows) out.labels.push_back(labels[static_cast<std::size_t>(r)]);
    }
    return out;
  }
};

inline void check_dataset(const FamilySpec& spec, const Dataset& data) {
  if (data.size() < 1) throw DataError("no observations");
  if (data.dim() != spec.observation_dim())
    throw DataError("dataset has " + std::to_string(data.dim()) + " columns, family expects " +
                    std::to_string(spec.observation_dim()));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    try {
      check_observation(spec, data.x.row(i).transpose());
    } catch (const DomainError& e) {
      throw DataError(std::string("observation ") + std::to_string(i + 1) + ": " + e.what());
    }
  }
}

/// Discrete measure sum_k masses[k] * delta_{atoms[k]}.
struct MixingMeasure {
  std::vector<Eigen::VectorXd> atoms;
  std::vector<double> masses;

  std::size_t size() const { return atoms.size(); }

  /// Drops zero-mass atoms and merges atoms closer than merge_tol (Euclidean).
  MixingMeasure canonical(double merge_tol = 1e-12) const {
    MixingMeasure out;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      if (masses[k] <= 0.0) continue;
      bool merged = false;
      for (std::size_t j = 0; j < out.atoms.size(); ++j) {
        if ((out.atoms[j] - atoms[k]).norm() < merge_tol) {
          out.masses[j] += masses[k];
          merged = true;
          break;
        }
      }
      if (!merged) {
        out.atoms.push_back(atoms[k]);
        out.masses.push_back(masses[k]);
      }
    }
    return out;
  }

  bool operator==(const MixingMeasure& o) const {
    if (atoms.size() != o.atoms.size() || masses != o.masses) return false;
    for (std::size_t k = 0; k < atoms.size(); ++k)
      if (atoms[k] != o.atoms[k]) return false;
    return true;
  }
};

/// theta = (w, eta_1..eta_K) for a fixed family.
struct MixtureParams {
  FamilySpec spec;
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> components;

  std::size_t size() const { return weights.size(); }

  void validate() const {
    spec.validate();
    if (weights.empty()) throw ContractViolation("mixture needs at least one component");
    if (weights.size() != components.size())
      throw ContractViolation("mixture weights and components differ in length");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw ContractViolation("mixture weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ContractViolation("mixture weights must sum to one");
    for (const auto& eta : components) check_parameter(spec, eta);
  }
};

/// log sum_k w_k g(x; eta_k).
inline double mixture_log_density(const MixtureParams& theta, const Eigen::Ref<const Eigen::VectorXd>& x) {
  theta.validate();
  std::vector<double> terms;
  terms.reserve(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    if (theta.weights[k] == 0.0) continue;
    terms.push_back(std::log(theta.weights[k]) + log_density(theta.spec, x, theta.components[k]));
  }
  return log_sum_exp(terms);
}

/// Sum of mixture_log_density over the dataset.
inline double mixture_log_likelihood(const MixtureParams& theta, const Dataset& data) {
  theta.validate();
  Eigen::MatrixXd lp = log_density_matrix(theta.spec, data.x, theta.components);
  for (std::size_t k = 0; k < theta.size(); ++k)
    lp.col(static_cast<Eigen::Index>(k)).array() += std::log(theta.weights[k]);
  double ll = 0.0;
  std::vector<double> row(theta.size());
  for (Eigen::Index i = 0; i < lp.rows(); ++i) {
    for (Eigen::Index k = 0; k < lp.cols(); ++k) row[static_cast<std::size_t>(k)] = lp(i, k);
    ll += log_sum_exp(row);
  }
  return ll;
}

namespace detail {

inline Eigen::VectorXd draw_component(const FamilySpec& spec, const Eigen::VectorXd& eta, Rng& rng) {
  switch (spec.kind) {
    case FamilyKind::gaussian_location: {
      std::normal_distribution<double> normal(0.0, std::sqrt(spec.sigma2));
      Eigen::VectorXd x(spec.dim);
      for (int j = 0; j < spec.dim; ++j) x[j] = eta[j] + normal(rng);
      return x;
    }
    case FamilyKind::exponential_rate: {
      std::exponential_distribution<double> expo(eta[0]);
      return Eigen::VectorXd::Constant(1, expo(rng));
    }
    case FamilyKind::multinomial: {
      std::discrete_distribution<int> category(eta.data(), eta.data() + eta.size());
      Eigen::VectorXd x = Eigen::VectorXd::Zero(spec.dim);
      for (int t = 0; t < spec.trials; ++t) x[category(rng)] += 1.0;
      return x;
    }
  }
  return {};
}

}  // namespace detail

/// n i.i.d. draws with labels; identical seeds give identical datasets.
inline Dataset sample(const MixtureParams& theta, Eigen::Index n, std::uint64_t seed) {
  theta.validate();
  if (n < 1) throw ContractViolation("sample: n must be >= 1");
  Rng rng = make_rng(seed, "mixture-sample");
  std::discrete_distribution<int> label(theta.weights.begin(), theta.weights.end());
  Dataset data;
  data.x.resize(n, theta.spec.observation_dim());
  data.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = label(rng);
    data.labels[static_cast<std::size_t>(i)] = k;
    data.x.row(i) = detail::draw_component(theta.spec, theta.components[static_cast<std::size_t>(k)], rng).transpose();
  }
  return data;
}

/// G(theta) = sum_k w_k delta_{eta_k}; zero-weight atoms are kept.
inline MixingMeasure mixing_measure(const MixtureParams& theta) {
  theta.validate();
  return MixingMeasure{theta.components, theta.weights};
}

/// E[X | eta] in observation space.
inline Eigen::VectorXd component_mean(const FamilySpec& spec, const Eigen::VectorXd& eta) {
  switch (spec.kind) {
    case FamilyKind::gaussian_location: return eta;
    case FamilyKind::exponential_rate: return Eigen::VectorXd::Constant(1, 1.0 / eta[0]);
    case FamilyKind::multinomial: return spec.trials * eta;
  }
  return eta;
}

}  // namespace vbmix
