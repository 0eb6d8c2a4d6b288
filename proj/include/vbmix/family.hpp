#pragma once

// Exponential-family components g(x; eta) = exp{eta' T(x) - T0(x) - A(eta)} and their
// conjugate variational blocks.
//
// Parameters are always exposed in the user-facing parameterization:
//   gaussian_location  eta = mean vector mu (known isotropic covariance sigma2 * I)
//   exponential_rate   eta = rate (> 0)
//   multinomial        eta = category probabilities (on the simplex)
//
// Sufficient-statistic conventions:
//   gaussian_location  T(x) = x. The exponent is (mu' x - |mu|^2 / 2) / sigma2, so the
//                      1/sigma2 factor is folded into A: A(mu) = |mu|^2 / (2 sigma2) and
//                      the exponent's linear term is mu' T(x) / sigma2.
//   exponential_rate   T(x) = -x, A(eta) = -log eta.
//   multinomial        T(x) = x (counts). The natural coordinates are the d-1 log-odds
//                      theta_j = log(p_j / p_d); A(theta) = M log(1 + sum_j exp theta_j).

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "vbmix/errors.hpp"
#include "vbmix/numerics.hpp"

namespace vbmix {

enum class FamilyKind { gaussian_location, exponential_rate, multinomial };

inline std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::gaussian_location: return "gaussian_location";
    case FamilyKind::exponential_rate: return "exponential_rate";
    case FamilyKind::multinomial: return "multinomial";
  }
  return "unknown";
}

struct FamilySpec {
  FamilyKind kind = FamilyKind::gaussian_location;
  int dim = 1;          // gaussian: d; exponential: 1; multinomial: number of categories
  double sigma2 = 1.0;  // gaussian only
  int trials = 1;       // multinomial only

  static FamilySpec gaussian_location(int d, double sigma2 = 1.0) {
    FamilySpec s{FamilyKind::gaussian_location, d, sigma2, 1};
    s.validate();
    return s;
  }
  static FamilySpec exponential_rate() { return {FamilyKind::exponential_rate, 1, 1.0, 1}; }
  static FamilySpec multinomial(int categories, int trials) {
    FamilySpec s{FamilyKind::multinomial, categories, 1.0, trials};
    s.validate();
    return s;
  }

  void validate() const {
    if (dim < 1) throw ContractViolation("FamilySpec: dimension must be >= 1");
    if (kind == FamilyKind::gaussian_location && !(sigma2 > 0.0))
      throw ContractViolation("FamilySpec: sigma2 must be positive");
    if (kind == FamilyKind::multinomial && trials < 1)
      throw ContractViolation("FamilySpec: multinomial trial count must be >= 1");
    if (kind == FamilyKind::exponential_rate && dim != 1)
      throw ContractViolation("FamilySpec: exponential_rate is one-dimensional");
  }

  /// Columns of one observation row.
  int observation_dim() const { return dim; }

  /// Length of the user-facing parameter vector eta.
  int parameter_dim() const { return dim; }

  /// Free parameters per component (the d in the BIC penalty dK + K - 1).
  int free_parameters() const { return kind == FamilyKind::multinomial ? dim - 1 : dim; }

  bool operator==(const FamilySpec&) const = default;
};

// Conjugate prior / variational posterior blocks. Prior and posterior share a shape.
struct NormalParams {
  Eigen::VectorXd mean;
  double precision = 1.0;  // covariance = I / precision
};
struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;
};
struct DirichletParams {
  Eigen::VectorXd concentration;
};

using ConjugateParams = std::variant<NormalParams, GammaParams, DirichletParams>;
using ComponentPrior = ConjugateParams;
using ComponentPosterior = ConjugateParams;

struct WeightedStats {
  double count = 0.0;        // n_k = sum_i p_ik
  Eigen::VectorXd stat_sum;  // sum_i p_ik T(x_i)
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DomainError(msg);
}

inline const NormalParams& as_normal(const ConjugateParams& p) {
  if (auto* v = std::get_if<NormalParams>(&p)) return *v;
  throw ContractViolation("expected Normal parameters for gaussian_location");
}
inline const GammaParams& as_gamma(const ConjugateParams& p) {
  if (auto* v = std::get_if<GammaParams>(&p)) return *v;
  throw ContractViolation("expected Gamma parameters for exponential_rate");
}
inline const DirichletParams& as_dirichlet(const ConjugateParams& p) {
  if (auto* v = std::get_if<DirichletParams>(&p)) return *v;
  throw ContractViolation("expected Dirichlet parameters for multinomial");
}

inline double log_multinomial_coefficient(const Eigen::Ref<const Eigen::VectorXd>& x, int trials) {
  double c = log_gamma(trials + 1.0);
  for (Eigen::Index j = 0; j < x.size(); ++j) c -= log_gamma(x[j] + 1.0);
  return c;
}

}  // namespace detail

/// Throws DomainError unless x lies in the support of the family.
inline void check_observation(const FamilySpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != spec.observation_dim())
    throw DomainError("observation has dimension " + std::to_string(x.size()) + ", expected " +
                      std::to_string(spec.observation_dim()));
  if (!x.allFinite()) throw DomainError("observation is not finite");
  switch (spec.kind) {
    case FamilyKind::gaussian_location: return;
    case FamilyKind::exponential_rate:
      detail::require(x[0] >= 0.0, "exponential_rate observation must be >= 0");
      return;
    case FamilyKind::multinomial: {
      double total = 0.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        detail::require(x[j] >= 0.0 && x[j] == std::floor(x[j]),
                        "multinomial counts must be nonnegative integers");
        total += x[j];
      }
      detail::require(total == spec.trials, "multinomial counts must sum to the trial count");
      return;
    }
  }
}

/// Throws DomainError unless eta is a valid user-facing component parameter.
inline void check_parameter(const FamilySpec& spec, const Eigen::Ref<const Eigen::VectorXd>& eta) {
  if (eta.size() != spec.parameter_dim())
    throw DomainError("parameter has dimension " + std::to_string(eta.size()) + ", expected " +
                      std::to_string(spec.parameter_dim()));
  if (!eta.allFinite()) throw DomainError("parameter is not finite");
  switch (spec.kind) {
    case FamilyKind::gaussian_location: return;
    case FamilyKind::exponential_rate:
      detail::require(eta[0] > 0.0, "exponential rate must be positive");
      return;
    case FamilyKind::multinomial:
      detail::require(eta.minCoeff() >= 0.0 && std::abs(eta.sum() - 1.0) <= 1e-9,
                      "multinomial probabilities must lie on the simplex");
      return;
  }
}

inline void check_conjugate(const FamilySpec& spec, const ConjugateParams& p) {
  switch (spec.kind) {
    case FamilyKind::gaussian_location: {
      const auto& n = detail::as_normal(p);
      detail::require(n.mean.size() == spec.dim && n.mean.allFinite(), "invalid Normal mean");
      detail::require(n.precision > 0.0 && std::isfinite(n.precision), "Normal precision must be positive");
      return;
    }
    case FamilyKind::exponential_rate: {
      const auto& g = detail::as_gamma(p);
      detail::require(g.shape > 0.0 && g.rate > 0.0 && std::isfinite(g.shape) && std::isfinite(g.rate),
                      "Gamma shape and rate must be positive");
      return;
    }
    case FamilyKind::multinomial: {
      const auto& d = detail::as_dirichlet(p);
      detail::require(d.concentration.size() == spec.dim && d.concentration.allFinite() &&
                          d.concentration.minCoeff() > 0.0,
                      "Dirichlet concentration must be positive");
      return;
    }
  }
}

/// Defaults: N(0, I) for locations, Gamma(1, 1) for rates, Dir(1, ..., 1) for probabilities.
inline ComponentPrior default_component_prior(const FamilySpec& spec) {
  switch (spec.kind) {
    case FamilyKind::gaussian_location: return NormalParams{Eigen::VectorXd::Zero(spec.dim), 1.0};
    case FamilyKind::exponential_rate: return GammaParams{1.0, 1.0};
    case FamilyKind::multinomial: return DirichletParams{Eigen::VectorXd::Ones(spec.dim)};
  }
  throw ContractViolation("unknown family");
}

/// log g(x; eta).
inline double log_density(const FamilySpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& eta) {
  check_observation(spec, x);
  check_parameter(spec, eta);
  switch (spec.kind) {
    case FamilyKind::gaussian_location:
      return -0.5 * spec.dim * std::log(2.0 * std::numbers::pi * spec.sigma2) -
             (x - eta).squaredNorm() / (2.0 * spec.sigma2);
    case FamilyKind::exponential_rate: return std::log(eta[0]) - eta[0] * x[0];
    case FamilyKind::multinomial: {
      double lp = detail::log_multinomial_coefficient(x, spec.trials);
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (x[j] > 0.0) lp += x[j] * std::log(eta[j]);  // 0 * log 0 = 0
      }
      return lp;
    }
  }
  return 0.0;
}

/// T(x) under the conventions documented at the top of this header.
inline Eigen::VectorXd sufficient_stat(const FamilySpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_observation(spec, x);
  if (spec.kind == FamilyKind::exponential_rate) return -x;
  return x;
}

/// Natural coordinates of eta (identity except for multinomial log-odds).
inline Eigen::VectorXd to_natural(const FamilySpec& spec, const Eigen::Ref<const Eigen::VectorXd>& eta) {
  check_parameter(spec, eta);
  if (spec.kind != FamilyKind::multinomial) return eta;
  const Eigen::Index free = spec.dim - 1;
  Eigen::VectorXd theta(free);
  for (Eigen::Index j = 0; j < free; ++j) theta[j] = std::log(eta[j] / eta[free]);
  return theta;
}

/// A(.) evaluated at natural coordinates.
inline double log_partition(const FamilySpec& spec, const Eigen::Ref<const Eigen::VectorXd>& natural) {
  switch (spec.kind) {
    case FamilyKind::gaussian_location: return natural.squaredNorm() / (2.0 * spec.sigma2);
    case FamilyKind::exponential_rate:
      detail::require(natural.size() == 1 && natural[0] > 0.0, "rate must be positive");
      return -std::log(natural[0]);
    case FamilyKind::multinomial: {
      detail::require(natural.size() == spec.dim - 1, "multinomial natural parameter has d-1 entries");
      std::vector<double> terms(natural.data(), natural.data() + natural.size());
      terms.push_back(0.0);
      return spec.trials * log_sum_exp(terms);
    }
  }
  return 0.0;
}

/// Fisher information, the Hessian of A in natural coordinates. Size free_parameters()^2.
inline Eigen::MatrixXd fisher_info(const FamilySpec& spec, const Eigen::Ref<const Eigen::VectorXd>& eta) {
  check_parameter(spec, eta);
  switch (spec.kind) {
    case FamilyKind::gaussian_location:
      return Eigen::MatrixXd::Identity(spec.dim, spec.dim) / spec.sigma2;
    case FamilyKind::exponential_rate: return Eigen::MatrixXd::Constant(1, 1, 1.0 / (eta[0] * eta[0]));
    case FamilyKind::multinomial: {
      detail::require(eta.minCoeff() > 0.0, "Fisher information undefined on the simplex boundary");
      const Eigen::VectorXd p = eta.head(spec.dim - 1);
      Eigen::MatrixXd info = -p * p.transpose();
      info.diagonal() += p;
      return spec.trials * info;
    }
  }
  return {};
}

/// Conjugate update of a component prior with weighted sufficient statistics.
inline ComponentPosterior posterior_update(const FamilySpec& spec, const ComponentPrior& prior,
                                           const WeightedStats& stats) {
  check_conjugate(spec, prior);
  if (stats.count == 0.0 && (stats.stat_sum.size() == 0 || stats.stat_sum.isZero(0.0))) return prior;
  switch (spec.kind) {
    case FamilyKind::gaussian_location: {
      const auto& p = detail::as_normal(prior);
      const double precision = p.precision + stats.count / spec.sigma2;
      Eigen::VectorXd mean = (p.precision * p.mean + stats.stat_sum / spec.sigma2) / precision;
      return NormalParams{std::move(mean), precision};
    }
    case FamilyKind::exponential_rate: {
      const auto& p = detail::as_gamma(prior);
      return GammaParams{p.shape + stats.count, p.rate - stats.stat_sum[0]};
    }
    case FamilyKind::multinomial: {
      const auto& p = detail::as_dirichlet(prior);
      return DirichletParams{p.concentration + stats.stat_sum};
    }
  }
  return prior;
}

/// E_{q(eta)}[log g(x; eta)].
inline double expected_log_density(const FamilySpec& spec, const ComponentPosterior& post,
                                   const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_observation(spec, x);
  check_conjugate(spec, post);
  switch (spec.kind) {
    case FamilyKind::gaussian_location: {
      const auto& q = detail::as_normal(post);
      return -0.5 * spec.dim * std::log(2.0 * std::numbers::pi * spec.sigma2) -
             ((x - q.mean).squaredNorm() + spec.dim / q.precision) / (2.0 * spec.sigma2);
    }
    case FamilyKind::exponential_rate: {
      const auto& q = detail::as_gamma(post);
      return digamma(q.shape) - std::log(q.rate) - q.shape / q.rate * x[0];
    }
    case FamilyKind::multinomial: {
      const auto& q = detail::as_dirichlet(post);
      const double psi_total = digamma(q.concentration.sum());
      double e = detail::log_multinomial_coefficient(x, spec.trials);
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (x[j] > 0.0) e += x[j] * (digamma(q.concentration[j]) - psi_total);
      }
      return e;
    }
  }
  return 0.0;
}

/// Posterior mean of eta in the user-facing parameterization.
inline Eigen::VectorXd posterior_mean(const FamilySpec& spec, const ComponentPosterior& post) {
  check_conjugate(spec, post);
  switch (spec.kind) {
    case FamilyKind::gaussian_location: return detail::as_normal(post).mean;
    case FamilyKind::exponential_rate: {
      const auto& q = detail::as_gamma(post);
      return Eigen::VectorXd::Constant(1, q.shape / q.rate);
    }
    case FamilyKind::multinomial: {
      const auto& c = detail::as_dirichlet(post).concentration;
      return c / c.sum();
    }
  }
  return {};
}

/// KL(post || prior) between same-family conjugate distributions.
inline double kl_to_prior(const FamilySpec& spec, const ComponentPosterior& post,
                          const ComponentPrior& prior) {
  check_conjugate(spec, post);
  check_conjugate(spec, prior);
  double kl = 0.0;
  switch (spec.kind) {
    case FamilyKind::gaussian_location: {
      const auto& q = detail::as_normal(post);
      const auto& p = detail::as_normal(prior);
      const double d = spec.dim;
      const double ratio = p.precision / q.precision;
      kl = 0.5 * (d * ratio + p.precision * (q.mean - p.mean).squaredNorm() - d - d * std::log(ratio));
      break;
    }
    case FamilyKind::exponential_rate: {
      const auto& q = detail::as_gamma(post);
      const auto& p = detail::as_gamma(prior);
      kl = (q.shape - p.shape) * digamma(q.shape) - log_gamma(q.shape) + log_gamma(p.shape) +
           p.shape * (std::log(q.rate) - std::log(p.rate)) + q.shape * (p.rate - q.rate) / q.rate;
      break;
    }
    case FamilyKind::multinomial: {
      const auto& q = detail::as_dirichlet(post).concentration;
      const auto& p = detail::as_dirichlet(prior).concentration;
      kl = dirichlet_kl(std::span<const double>(q.data(), q.size()),
                        std::span<const double>(p.data(), p.size()));
      break;
    }
  }
  return std::max(kl, 0.0);
}

/// log g(x_i; eta_k) for every row of x and every component: an n x K matrix.
/// Observations are assumed already validated (see check_dataset).
inline Eigen::MatrixXd log_density_matrix(const FamilySpec& spec, const Eigen::MatrixXd& x,
                                          const std::vector<Eigen::VectorXd>& etas) {
  const Eigen::Index n = x.rows();
  const auto K = static_cast<Eigen::Index>(etas.size());
  for (const auto& eta : etas) check_parameter(spec, eta);
  Eigen::MatrixXd out(n, K);
  switch (spec.kind) {
    case FamilyKind::gaussian_location: {
      const double c = -0.5 * spec.dim * std::log(2.0 * std::numbers::pi * spec.sigma2);
      for (Eigen::Index k = 0; k < K; ++k)
        out.col(k) = c - (x.rowwise() - etas[static_cast<std::size_t>(k)].transpose()).rowwise().squaredNorm().array() /
                             (2.0 * spec.sigma2);
      break;
    }
    case FamilyKind::exponential_rate:
      for (Eigen::Index k = 0; k < K; ++k) {
        const double rate = etas[static_cast<std::size_t>(k)][0];
        out.col(k) = std::log(rate) - rate * x.col(0).array();
      }
      break;
    case FamilyKind::multinomial:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double coef = detail::log_multinomial_coefficient(x.row(i).transpose(), spec.trials);
        for (Eigen::Index k = 0; k < K; ++k) {
          double lp = coef;
          const auto& p = etas[static_cast<std::size_t>(k)];
          for (Eigen::Index j = 0; j < x.cols(); ++j)
            if (x(i, j) > 0.0) lp += x(i, j) * std::log(p[j]);
          out(i, k) = lp;
        }
      }
      break;
  }
  return out;
}

/// E_{q_k}[log g(x_i; eta_k)] for every row and component: an n x K matrix.
inline Eigen::MatrixXd expected_log_density_matrix(const FamilySpec& spec, const Eigen::MatrixXd& x,
                                                   const std::vector<ComponentPosterior>& posts) {
  const Eigen::Index n = x.rows();
  const auto K = static_cast<Eigen::Index>(posts.size());
  for (const auto& q : posts) check_conjugate(spec, q);
  Eigen::MatrixXd out(n, K);
  switch (spec.kind) {
    case FamilyKind::gaussian_location: {
      const double c = -0.5 * spec.dim * std::log(2.0 * std::numbers::pi * spec.sigma2);
      Eigen::MatrixXd means(spec.dim, K);
      Eigen::RowVectorXd offset(K);
      for (Eigen::Index k = 0; k < K; ++k) {
        const auto& q = detail::as_normal(posts[static_cast<std::size_t>(k)]);
        means.col(k) = q.mean;
        offset[k] = q.mean.squaredNorm() + spec.dim / q.precision;
      }
      // |x - m|^2 = |x|^2 - 2 x'm + |m|^2
      out.noalias() = 2.0 * x * means;
      out.rowwise() -= offset;
      out.colwise() -= x.rowwise().squaredNorm();
      out = (c + out.array() / (2.0 * spec.sigma2)).matrix();
      break;
    }
    case FamilyKind::exponential_rate:
      for (Eigen::Index k = 0; k < K; ++k) {
        const auto& q = detail::as_gamma(posts[static_cast<std::size_t>(k)]);
        out.col(k) = (digamma(q.shape) - std::log(q.rate)) - (q.shape / q.rate) * x.col(0).array();
      }
      break;
    case FamilyKind::multinomial: {
      Eigen::MatrixXd psi(spec.dim, K);
      for (Eigen::Index k = 0; k < K; ++k) {
        const auto& c = detail::as_dirichlet(posts[static_cast<std::size_t>(k)]).concentration;
        const double psi_total = digamma(c.sum());
        for (Eigen::Index j = 0; j < spec.dim; ++j) psi(j, k) = digamma(c[j]) - psi_total;
      }
      out.noalias() = x * psi;
      for (Eigen::Index i = 0; i < n; ++i)
        out.row(i).array() += detail::log_multinomial_coefficient(x.row(i).transpose(), spec.trials);
      break;
    }
  }
  return out;
}

}  // namespace vbmix
