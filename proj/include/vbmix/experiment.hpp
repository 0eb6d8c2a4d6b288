#pragma once

// Seeded simulation presets: grid cells run independently (optionally in parallel), then a
// single-threaded pass aggregates them in grid order and writes results.csv, summary.json
// and SVG plots.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vbmix/errors.hpp"
#include "vbmix/evidence.hpp"
#include "vbmix/family.hpp"
#include "vbmix/io.hpp"
#include "vbmix/metrics.hpp"
#include "vbmix/mixture.hpp"
#include "vbmix/parallel.hpp"
#include "vbmix/random.hpp"
#include "vbmix/selection.hpp"
#include "vbmix/svg.hpp"
#include "vbmix/vb.hpp"

#ifndef VBMIX_DATA_DIR
#define VBMIX_DATA_DIR "data"
#endif

namespace vbmix {

enum class PresetKind {
  elbo_vs_k,      // figure1
  elbo_vs_log_n,  // figure2
  elbo_vs_phi0,   // figure3
  weights_table,  // table1, table2
  evidence_curve,
  faithful,
  selection_accuracy  // presets 1..6
};

struct ExperimentPreset {
  std::string name;
  PresetKind kind = PresetKind::elbo_vs_k;
  FamilySpec spec;
  MixtureParams truth;  // data-generating mixture (unused by faithful)
  int k_star = 0;
  std::vector<Eigen::Index> ns;
  std::vector<int> ks;
  std::vector<double> phi0s;
  std::vector<double> fractions;  // faithful subsample fractions
  int reps = 1;
  bool with_bic = false;
  ChainSettings chain;  // evidence_curve only
  int rungs = 0;

  void validate() const {
    if (name.empty()) throw ContractViolation("preset needs a name");
    if (ks.empty() || phi0s.empty() || reps < 1) throw ContractViolation("preset '" + name + "': empty grid");
    if (kind == PresetKind::faithful ? fractions.empty() : ns.empty())
      throw ContractViolation("preset '" + name + "': empty grid");
    for (int k : ks)
      if (k < 1) throw ContractViolation("preset '" + name + "': K must be >= 1");
    for (double p : phi0s)
      if (!(p > 0.0)) throw ContractViolation("preset '" + name + "': phi0 must be positive");
    for (double f : fractions)
      if (!(f > 0.0 && f <= 1.0)) throw ContractViolation("preset '" + name + "': fractions must lie in (0, 1]");
  }
};

// ---- data-generating models --------------------------------------------------------------

/// 1/2 N(-2/sqrt(6) 1, I) + 1/2 N(2/sqrt(6) 1, I) in six dimensions.
inline MixtureParams six_dim_two_component() {
  const FamilySpec spec = FamilySpec::gaussian_location(6, 1.0);
  const double a = 2.0 / std::sqrt(6.0);
  return MixtureParams{spec, {0.5, 0.5}, {Eigen::VectorXd::Constant(6, -a), Eigen::VectorXd::Constant(6, a)}};
}

/// 1/2 N(-2, 1) + 1/2 N(2, 1).
inline MixtureParams bimodal_1d() {
  const FamilySpec spec = FamilySpec::gaussian_location(1, 1.0);
  return MixtureParams{spec, {0.5, 0.5}, {Eigen::VectorXd::Constant(1, -2.0), Eigen::VectorXd::Constant(1, 2.0)}};
}

/// Location-Gaussian comparison models 1..6 (identity covariance).
inline MixtureParams comparison_model(int index) {
  const double r2 = std::sqrt(2.0);
  const auto vec = [](std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
  };
  const auto axis = [&](int d, int j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e[j] = r2;
    return e;
  };
  switch (index) {
    case 1:
      return {FamilySpec::gaussian_location(2), {0.3, 0.7}, {vec({0, 0}), vec({2, 2})}};
    case 2:
      return {FamilySpec::gaussian_location(2), {0.5, 0.5}, {vec({r2, 0}), vec({0, r2})}};
    case 3:
      return {FamilySpec::gaussian_location(4),
              {0.2, 0.3, 0.5},
              {vec({0, 0, 0, 0}), vec({2.5, 1.5, 2, 1.5}), vec({1.5, 3, 2.75, 2})}};
    case 4:
      return {FamilySpec::gaussian_location(4), {0.3, 0.3, 0.4}, {axis(4, 0), axis(4, 1), axis(4, 2)}};
    case 5:
      return {FamilySpec::gaussian_location(6),
              {0.1, 0.3, 0.1, 0.3, 0.2},
              {vec({0, 0, 0, 0, 0, 0}), vec({-1.5, 2.25, -1, 0, 0.5, 0.75}), vec({0.25, 1.5, 0.75, 0.25, -0.5, -1}),
               vec({-0.25, 0.5, -2.5, 1.25, 0.75, 1.5}), vec({-1, -1.5, -0.25, 1.75, -0.5, 2})}};
    case 6:
      return {FamilySpec::gaussian_location(6),
              {0.2, 0.2, 0.2, 0.2, 0.2},
              {axis(6, 0), axis(6, 1), axis(6, 2), axis(6, 3), axis(6, 4)}};
    default:
      throw ContractViolation("comparison_model: index must be in 1..6");
  }
}

/// Old Faithful with waiting time divided by 15, so both coordinates have similar spread.
inline Dataset load_faithful(const std::filesystem::path& path = std::filesystem::path(VBMIX_DATA_DIR) / "old_faithful.csv") {
  Dataset data = load_dataset_csv(path, FamilySpec::gaussian_location(2, 0.25));
  data.x.col(1) /= 15.0;
  return data;
}

// ---- presets -----------------------------------------------------------------------------

inline std::vector<std::string> preset_names() {
  return {"figure1", "figure2", "figure3", "table1", "table2", "evidence_curve", "faithful",
          "preset1", "preset2", "preset3", "preset4", "preset5", "preset6"};
}

inline ExperimentPreset make_preset(const std::string& name) {
  ExperimentPreset p;
  p.name = name;
  const auto six_dim = [&] {
    p.truth = six_dim_two_component();
    p.spec = p.truth.spec;
    p.k_star = 2;
  };
  if (name == "figure1") {
    six_dim();
    p.kind = PresetKind::elbo_vs_k;
    p.ns = {10000, 100000};
    p.ks = {1, 2, 3, 4, 5};
    p.phi0s = {1, 2, 3.5, 4.5, 6};
  } else if (name == "figure2") {
    six_dim();
    p.kind = PresetKind::elbo_vs_log_n;
    p.ns = {10, 50, 250, 1250, 6250};
    p.ks = {2, 3, 4, 5};
    p.phi0s = {1, 3.5, 6};
    p.reps = 5;
  } else if (name == "figure3") {
    six_dim();
    p.kind = PresetKind::elbo_vs_phi0;
    p.ns = {10000};
    p.ks = {2, 3, 4, 5};
    p.phi0s = {0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4.5, 6};
  } else if (name == "table1" || name == "table2") {
    six_dim();
    p.kind = PresetKind::weights_table;
    p.ns = {1000, 10000};
    p.ks = {5};
    p.phi0s = {1, 2, 3.5, 4.5, 6};
    p.reps = 10;
  } else if (name == "evidence_curve") {
    p.truth = bimodal_1d();
    p.spec = p.truth.spec;
    p.k_star = 2;
    p.kind = PresetKind::evidence_curve;
    p.ns = {1000};
    p.ks = {1, 2, 3, 4};
    p.phi0s = {0.25, 1};
    p.chain = ChainSettings{};
    p.rungs = 32;
  } else if (name == "faithful") {
    p.kind = PresetKind::faithful;
    p.spec = FamilySpec::gaussian_location(2, 0.25);
    p.k_star = 2;
    p.ks = {1, 2, 3, 4, 5, 6};
    p.phi0s = {1, 4};
    p.fractions = {0.05, 0.075, 0.10, 0.15, 0.25};
    p.reps = 100;
    p.with_bic = true;
  } else if ((name.rfind("preset", 0) == 0 && name.size() == 7) || (name.rfind("presets", 0) == 0 && name.size() == 8)) {
    const char c = name.back();
    if (c < '1' || c > '6') throw ContractViolation("unknown preset '" + name + "'");
    p.name = std::string("preset") + c;
    p.truth = comparison_model(c - '0');
    p.spec = p.truth.spec;
    p.k_star = static_cast<int>(p.truth.size());
    p.kind = PresetKind::selection_accuracy;
    p.ns = {200, 400, 600, 800};
    for (int k = 1; k <= p.k_star + 3; ++k) p.ks.push_back(k);
    p.phi0s = {1, 5};
    p.reps = 20;
    p.with_bic = true;
  } else {
    throw ContractViolation("unknown preset '" + name + "'");
  }
  p.validate();
  return p;
}

// ---- cells -------------------------------------------------------------------------------

struct ExperimentOptions {
  std::optional<int> reps;
  std::vector<Eigen::Index> ns;   // replaces the preset's sample sizes when nonempty
  std::vector<double> phi0s;      // replaces the preset's phi0 grid when nonempty
  std::vector<int> ks;            // replaces the preset's K grid when nonempty
  std::vector<double> fractions;  // faithful only
  int jobs = 1;
  CaviOptions cavi;
  EmOptions em;
  std::optional<ChainSettings> chain;
  std::optional<int> rungs;
  std::filesystem::path faithful_path = std::filesystem::path(VBMIX_DATA_DIR) / "old_faithful.csv";
  std::optional<std::uint64_t> shuffle_execution;  // permute execution order (results must not change)
};

struct ExperimentCell {
  std::string key;
  Eigen::Index n = 0;
  double phi0 = std::numeric_limits<double>::quiet_NaN();  // NaN: cell covers every phi0
  int rep = 0;
  int k = 0;                // evidence cells only
  int fraction_index = -1;  // faithful only; -1 is the full dataset
};

struct ResultRow {
  int k = 0;
  double phi0 = 0.0;
  Eigen::Index n = 0;
  int rep = 0;
  double elbo = std::numeric_limits<double>::quiet_NaN();
  double bic = std::numeric_limits<double>::quiet_NaN();
  double w1 = std::numeric_limits<double>::quiet_NaN();
  double redundant_mass = std::numeric_limits<double>::quiet_NaN();
};

struct CellResult {
  std::string key;
  std::vector<ResultRow> rows;
  nlohmann::json extra = nlohmann::json::object();
  std::string error;  // nonempty when the cell failed
};

struct ExperimentOutcome {
  ExperimentPreset preset;
  std::uint64_t seed = 0;
  std::vector<ExperimentCell> cells;
  std::vector<CellResult> results;  // parallel to cells
  nlohmann::json summary;
};

namespace detail {

inline std::string num_key(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline std::vector<ExperimentCell> build_cells(const ExperimentPreset& p) {
  std::vector<ExperimentCell> cells;
  switch (p.kind) {
    case PresetKind::elbo_vs_k:
    case PresetKind::elbo_vs_log_n:
    case PresetKind::elbo_vs_phi0:
    case PresetKind::weights_table:
      for (auto n : p.ns)
        for (double phi0 : p.phi0s)
          for (int r = 0; r < p.reps; ++r)
            cells.push_back({"n=" + std::to_string(n) + ";phi0=" + num_key(phi0) + ";rep=" + std::to_string(r), n, phi0, r});
      break;
    case PresetKind::evidence_curve:
      for (auto n : p.ns)
        for (double phi0 : p.phi0s)
          for (int r = 0; r < p.reps; ++r)
            for (int k : p.ks)
              cells.push_back({"n=" + std::to_string(n) + ";phi0=" + num_key(phi0) + ";rep=" + std::to_string(r) +
                                   ";k=" + std::to_string(k),
                               n, phi0, r, k});
      break;
    case PresetKind::faithful:
      cells.push_back({"full", 0, std::numeric_limits<double>::quiet_NaN(), 0, 0, -1});
      for (std::size_t f = 0; f < p.fractions.size(); ++f)
        for (int r = 0; r < p.reps; ++r)
          cells.push_back({"fraction=" + num_key(p.fractions[f]) + ";rep=" + std::to_string(r), 0,
                           std::numeric_limits<double>::quiet_NaN(), r, 0, static_cast<int>(f)});
      break;
    case PresetKind::selection_accuracy:
      for (auto n : p.ns)
        for (int r = 0; r < p.reps; ++r)
          cells.push_back({"n=" + std::to_string(n) + ";rep=" + std::to_string(r), n,
                           std::numeric_limits<double>::quiet_NaN(), r});
      break;
  }
  return cells;
}

/// Replicate r at sample size n uses the same data for every phi0 and K.
inline std::uint64_t data_seed(std::uint64_t seed, Eigen::Index n, int rep) {
  return derive_seed(derive_seed(seed, "data", static_cast<std::uint64_t>(n)), "rep", static_cast<std::uint64_t>(rep));
}

inline double plug_in_w1(const FitResult& fit, const ExperimentPreset& p) {
  if (p.truth.weights.empty()) return std::numeric_limits<double>::quiet_NaN();
  return wasserstein(mixing_measure(posterior_mean_params(p.spec, fit)), mixing_measure(p.truth), 1);
}

inline double plug_in_redundant(const FitResult& fit, const ExperimentPreset& p) {
  if (fit.num_components() < p.k_star) return std::numeric_limits<double>::quiet_NaN();
  return redundant_mass(std::vector<double>(fit.weight_means.data(), fit.weight_means.data() + fit.weight_means.size()),
                        p.k_star);
}

inline void run_grid_cell(const ExperimentPreset& p, const ExperimentCell& c, std::uint64_t seed,
                          const ExperimentOptions& o, CellResult& out) {
  const Dataset data = sample(p.truth, c.n, data_seed(seed, c.n, c.rep));
  const Priors priors = make_priors(p.spec, c.phi0);
  out.extra["loglik_truth"] = number(mixture_log_likelihood(p.truth, data));
  nlohmann::json sorted = nlohmann::json::object();
  for (int K : p.ks) {
    const FitResult fit = fit_best(p.spec, data, K, priors, derive_seed(seed, c.key, static_cast<std::uint64_t>(K)), o.cavi);
    out.rows.push_back({K, c.phi0, c.n, c.rep, fit.elbo, std::numeric_limits<double>::quiet_NaN(), plug_in_w1(fit, p),
                        plug_in_redundant(fit, p)});
    std::vector<double> w(fit.weight_means.data(), fit.weight_means.data() + fit.weight_means.size());
    std::sort(w.begin(), w.end(), std::greater<>());
    sorted[std::to_string(K)] = doubles_json(w);
  }
  out.extra["sorted_weights"] = std::move(sorted);
}

inline void run_selection_cell(const ExperimentPreset& p, const Dataset& data, const ExperimentCell& c,
                               Eigen::Index n, std::uint64_t seed, const ExperimentOptions& o, CellResult& out) {
  std::vector<double> bics;
  for (int K : p.ks) {
    double b = std::numeric_limits<double>::quiet_NaN();
    if (p.with_bic) {
      try {
        b = bic(p.spec, data, K, em_fit(p.spec, data, K, derive_seed(seed, c.key + ";em", static_cast<std::uint64_t>(K)), o.em));
      } catch (const NumericalError& e) {
        out.extra["bic_failures"].push_back(std::to_string(K) + ": " + e.what());
      }
    }
    bics.push_back(b);
  }
  for (double phi0 : p.phi0s) {
    const Priors priors = make_priors(p.spec, phi0);
    for (std::size_t i = 0; i < p.ks.size(); ++i) {
      const int K = p.ks[i];
      const FitResult fit = fit_best(p.spec, data, K, priors, derive_seed(seed, c.key, static_cast<std::uint64_t>(K)), o.cavi);
      out.rows.push_back({K, phi0, n, c.rep, fit.elbo, bics[i], plug_in_w1(fit, p), plug_in_redundant(fit, p)});
    }
  }
}

inline void run_evidence_cell(const ExperimentPreset& p, const ExperimentCell& c, std::uint64_t seed,
                              const ExperimentOptions& o, CellResult& out) {
  const Dataset data = sample(p.truth, c.n, data_seed(seed, c.n, c.rep));
  const Priors priors = make_priors(p.spec, c.phi0);
  const FitResult fit = fit_best(p.spec, data, c.k, priors, derive_seed(seed, c.key, 0), o.cavi);
  out.rows.push_back({c.k, c.phi0, c.n, c.rep, fit.elbo, std::numeric_limits<double>::quiet_NaN(), plug_in_w1(fit, p),
                      plug_in_redundant(fit, p)});
  ChainSettings chain = p.chain;
  chain.seed = derive_seed(seed, c.key, 1);
  const EvidenceEstimate est = stepping_stone_evidence(p.spec, data, c.k, priors, chain, p.rungs);
  const double ll = mixture_log_likelihood(p.truth, data);
  out.extra["loglik_truth"] = number(ll);
  out.extra["evidence"] = number(est.log_evidence);
  out.extra["evidence_se"] = number(est.std_error);
  out.extra["acceptance_rates"] = doubles_json(est.acceptance_rates);
  out.extra["evidence_theory"] =
      number(c.k >= p.k_star ? theoretical_evidence_curve(ll, c.k, p.k_star, c.n) : std::numeric_limits<double>::quiet_NaN());
}

inline CellResult run_cell(const ExperimentPreset& p, const ExperimentCell& c, std::uint64_t seed,
                           const ExperimentOptions& o, const Dataset* faithful) {
  CellResult out;
  out.key = c.key;
  try {
    switch (p.kind) {
      case PresetKind::elbo_vs_k:
      case PresetKind::elbo_vs_log_n:
      case PresetKind::elbo_vs_phi0:
      case PresetKind::weights_table:
        run_grid_cell(p, c, seed, o, out);
        break;
      case PresetKind::evidence_curve:
        run_evidence_cell(p, c, seed, o, out);
        break;
      case PresetKind::selection_accuracy: {
        const Dataset data = sample(p.truth, c.n, data_seed(seed, c.n, c.rep));
        run_selection_cell(p, data, c, c.n, seed, o, out);
        break;
      }
      case PresetKind::faithful: {
        if (c.fraction_index < 0) {
          run_selection_cell(p, *faithful, c, faithful->size(), seed, o, out);
          break;
        }
        const double frac = p.fractions[static_cast<std::size_t>(c.fraction_index)];
        const auto m = static_cast<Eigen::Index>(std::llround(frac * static_cast<double>(faithful->size())));
        if (m < 1) throw ContractViolation("fraction " + num_key(frac) + " leaves no observations");
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(faithful->size()));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        Rng rng = make_rng(derive_seed(seed, "subsample", static_cast<std::uint64_t>(c.fraction_index)), "rep",
                           static_cast<std::uint64_t>(c.rep));
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(m));
        std::sort(idx.begin(), idx.end());
        run_selection_cell(p, faithful->subset(idx), c, m, seed, o, out);
        break;
      }
    }
  } catch (const std::exception& e) {
    out.rows.clear();
    out.error = e.what();
  }
  return out;
}

// ---- aggregation -------------------------------------------------------------------------

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return v.empty() ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Row lookup: value of field for (cell, k, phi0).
inline const ResultRow* find_row(const CellResult& r, int k, double phi0) {
  for (const auto& row : r.rows)
    if (row.k == k && row.phi0 == phi0) return &row;
  return nullptr;
}

/// K with the largest value among ks (ties to the smaller K); 0 when nothing is finite.
inline int select_from(const std::vector<int>& ks, const std::vector<double>& values) {
  if (std::none_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) return 0;
  return ks[argmax_first(values)];
}

struct PlotRequest {
  std::string file;
  PlotLabels labels;
  std::vector<Series> series;
};

/// Mean of (L_K - L_{K*}) / ln n per K for the cells of one (n, phi0) group.
inline std::vector<double> normalized_elbo_means(const ExperimentPreset& p, const std::vector<const CellResult*>& group,
                                                 Eigen::Index n, double phi0) {
  std::vector<double> means;
  for (int K : p.ks) {
    std::vector<double> v;
    for (const auto* r : group) {
      const ResultRow* a = find_row(*r, K, phi0);
      const ResultRow* b = find_row(*r, p.k_star, phi0);
      if (a && b) v.push_back((a->elbo - b->elbo) / std::log(static_cast<double>(n)));
    }
    means.push_back(mean_of(v));
  }
  return means;
}

inline nlohmann::json summarize(const ExperimentOutcome& oc, std::vector<PlotRequest>& plots) {
  using nlohmann::json;
  const ExperimentPreset& p = oc.preset;
  json s{{"preset", p.name},
         {"seed", oc.seed},
         {"reps", p.reps},
         {"k_star", p.k_star},
         {"ks", p.ks},
         {"phi0s", doubles_json(p.phi0s)},
         {"versions", versions()}};
  json errors = json::array();
  for (const auto& r : oc.results)
    if (!r.error.empty()) errors.push_back(json{{"cell", r.key}, {"message", r.error}});
  s["errors"] = errors;

  // cells grouped by (n, phi0) in grid order
  const auto cells_for = [&](Eigen::Index n, double phi0) {
    std::vector<const CellResult*> g;
    for (std::size_t i = 0; i < oc.cells.size(); ++i)
      if (oc.results[i].error.empty() && oc.cells[i].n == n && oc.cells[i].phi0 == phi0) g.push_back(&oc.results[i]);
    return g;
  };
  const auto has_k = [&](int k) { return std::find(p.ks.begin(), p.ks.end(), k) != p.ks.end(); };
  const int d = p.spec.free_parameters();

  switch (p.kind) {
    case PresetKind::elbo_vs_k:
    case PresetKind::elbo_vs_phi0: {
      json groups = json::array();
      std::map<int, Series> by_k;  // figure3 curves
      for (auto n : p.ns) {
        std::vector<Series> curves;
        for (double phi0 : p.phi0s) {
          const auto g = cells_for(n, phi0);
          json grp{{"n", n}, {"phi0", phi0}, {"cells", g.size()}};
          std::vector<int> k_hats;
          for (const auto* r : g) {
            std::vector<double> e;
            for (int K : p.ks) {
              const ResultRow* row = find_row(*r, K, phi0);
              e.push_back(row ? row->elbo : std::numeric_limits<double>::quiet_NaN());
            }
            k_hats.push_back(select_from(p.ks, e));
          }
          grp["k_hat"] = k_hats;
          grp["k_hat_correct"] = std::count(k_hats.begin(), k_hats.end(), p.k_star);
          if (has_k(p.k_star)) {
            const auto means = normalized_elbo_means(p, g, n, phi0);
            grp["normalized_elbo"] = doubles_json(means);
            std::vector<double> xs, ys;
            for (std::size_t i = 0; i < p.ks.size(); ++i)
              if (p.ks[i] >= p.k_star && std::isfinite(means[i])) {
                xs.push_back(p.ks[i]);
                ys.push_back(means[i]);
              }
            grp["slope"] = number(xs.size() >= 2 ? least_squares_slope(xs, ys) : std::numeric_limits<double>::quiet_NaN());
            grp["predicted_slope"] = predicted_slope(phi0, d);
            Series curve{"phi0=" + num_key(phi0), {}, {}};
            for (std::size_t i = 0; i < p.ks.size(); ++i) {
              if (!std::isfinite(means[i])) continue;
              curve.x.push_back(p.ks[i]);
              curve.y.push_back(means[i]);
              auto& fig3 = by_k[p.ks[i]];
              fig3.name = "K=" + std::to_string(p.ks[i]);
              if (n == p.ns.front()) {
                fig3.x.push_back(phi0);
                fig3.y.push_back(means[i]);
              }
            }
            if (!curve.x.empty()) curves.push_back(std::move(curve));
          }
          groups.push_back(std::move(grp));
        }
        if (p.kind == PresetKind::elbo_vs_k && !curves.empty())
          plots.push_back({"figure1_n" + std::to_string(n) + ".svg",
                           {"(L_K - L_K*) / log n, n = " + std::to_string(n), "K", "(L_K - L_K*) / log n"},
                           std::move(curves)});
      }
      if (p.kind == PresetKind::elbo_vs_phi0) {
        std::vector<Series> curves;
        for (auto& [k, series] : by_k)
          if (k != p.k_star && !series.x.empty()) curves.push_back(series);
        if (!curves.empty())
          plots.push_back({"figure3.svg",
                           {"(L_K - L_K*) / log n, n = " + std::to_string(p.ns.front()), "phi0", "(L_K - L_K*) / log n"},
                           std::move(curves)});
      }
      s["groups"] = groups;
      break;
    }
    case PresetKind::elbo_vs_log_n: {
      json groups = json::array();
      for (double phi0 : p.phi0s) {
        std::vector<Series> curves;
        for (int K : p.ks) {
          Series curve{"K=" + std::to_string(K), {}, {}};
          json per_n = json::array();
          for (auto n : p.ns) {
            std::vector<double> v;
            for (const auto* r : cells_for(n, phi0))
              if (const ResultRow* row = find_row(*r, K, phi0)) v.push_back(row->elbo - r->extra.at("loglik_truth").get<double>());
            const double m = mean_of(v);
            per_n.push_back(number(m));
            if (std::isfinite(m)) {
              curve.x.push_back(std::log(static_cast<double>(n)));
              curve.y.push_back(m);
            }
          }
          json grp{{"phi0", phi0}, {"k", K}, {"ns", p.ns}, {"elbo_minus_loglik_truth", per_n}};
          grp["slope"] = number(curve.x.size() >= 2 ? least_squares_slope(curve.x, curve.y) : std::numeric_limits<double>::quiet_NaN());
          grp["predicted_slope"] = K >= p.k_star ? -predicted_lambda(K, p.k_star, d, phi0) : std::numeric_limits<double>::quiet_NaN();
          groups.push_back(std::move(grp));
          if (!curve.x.empty()) curves.push_back(std::move(curve));
        }
        if (!curves.empty())
          plots.push_back({"figure2_phi0_" + num_key(phi0) + ".svg",
                           {"L_K - log p*(X), phi0 = " + num_key(phi0), "log n", "L_K - log p*(X)"},
                           std::move(curves)});
      }
      s["groups"] = groups;
      break;
    }
    case PresetKind::weights_table: {
      json groups = json::array();
      const int K = p.ks.back();
      std::map<Eigen::Index, Series> w1_curves;
      for (auto n : p.ns) {
        std::vector<Series> weight_curves;
        for (double phi0 : p.phi0s) {
          const auto g = cells_for(n, phi0);
          std::vector<std::vector<double>> pos(static_cast<std::size_t>(K));
          std::vector<double> w1s, red;
          for (const auto* r : g) {
            const auto w = doubles_from(r->extra.at("sorted_weights").at(std::to_string(K)));
            for (std::size_t j = 0; j < w.size(); ++j) pos[j].push_back(w[j]);
            if (const ResultRow* row = find_row(*r, K, phi0)) {
              w1s.push_back(row->w1);
              red.push_back(row->redundant_mass);
            }
          }
          std::vector<double> wm, ws;
          for (const auto& v : pos) {
            wm.push_back(mean_of(v));
            ws.push_back(std_of(v));
          }
          groups.push_back(json{{"n", n},
                                {"phi0", phi0},
                                {"k", K},
                                {"cells", g.size()},
                                {"weight_mean", doubles_json(wm)},
                                {"weight_std", doubles_json(ws)},
                                {"w1_mean", number(mean_of(w1s))},
                                {"w1_std", number(std_of(w1s))},
                                {"redundant_mass_mean", number(mean_of(red))}});
          Series wc{"phi0=" + num_key(phi0), {}, {}};
          for (std::size_t j = 0; j < wm.size(); ++j)
            if (std::isfinite(wm[j])) {
              wc.x.push_back(static_cast<double>(j + 1));
              wc.y.push_back(wm[j]);
            }
          if (!wc.x.empty()) weight_curves.push_back(std::move(wc));
          auto& c = w1_curves[n];
          c.name = "n=" + std::to_string(n);
          if (std::isfinite(mean_of(w1s))) {
            c.x.push_back(phi0);
            c.y.push_back(mean_of(w1s));
          }
        }
        if (p.name == "table1" && !weight_curves.empty())
          plots.push_back({"table1_n" + std::to_string(n) + ".svg",
                           {"sorted mean weights, K = " + std::to_string(K) + ", n = " + std::to_string(n), "rank", "mean w"},
                           std::move(weight_curves)});
      }
      if (p.name != "table1") {
        std::vector<Series> curves;
        for (auto& [n, c] : w1_curves)
          if (!c.x.empty()) curves.push_back(c);
        if (!curves.empty())
          plots.push_back({"table2_w1.svg", {"mean W1(G(theta-bar), G*)", "phi0", "W1"}, std::move(curves)});
      }
      s["groups"] = groups;
      break;
    }
    case PresetKind::evidence_curve: {
      json groups = json::array();
      Series theory{"evidence (theory)", {}, {}};
      std::vector<Series> curves;
      for (auto n : p.ns)
        for (double phi0 : p.phi0s) {
          Series elbo_s{"ELBO phi0=" + num_key(phi0), {}, {}};
          Series ev_s{"evidence phi0=" + num_key(phi0), {}, {}};
          for (int K : p.ks) {
            std::vector<double> el, ev, se, th;
            for (std::size_t i = 0; i < oc.cells.size(); ++i) {
              const auto& c = oc.cells[i];
              const auto& r = oc.results[i];
              if (!r.error.empty() || c.n != n || c.phi0 != phi0 || c.k != K) continue;
              el.push_back(r.rows.front().elbo);
              ev.push_back(number_or_nan(r.extra.at("evidence")));
              se.push_back(number_or_nan(r.extra.at("evidence_se")));
              th.push_back(number_or_nan(r.extra.at("evidence_theory")));
            }
            groups.push_back(json{{"n", n},
                                  {"phi0", phi0},
                                  {"k", K},
                                  {"elbo", number(mean_of(el))},
                                  {"evidence", number(mean_of(ev))},
                                  {"evidence_se", number(mean_of(se))},
                                  {"evidence_theory", number(mean_of(th))}});
            if (std::isfinite(mean_of(el))) {
              elbo_s.x.push_back(K);
              elbo_s.y.push_back(mean_of(el));
            }
            if (std::isfinite(mean_of(ev))) {
              ev_s.x.push_back(K);
              ev_s.y.push_back(mean_of(ev));
            }
            if (n == p.ns.front() && phi0 == p.phi0s.front() && std::isfinite(mean_of(th))) {
              theory.x.push_back(K);
              theory.y.push_back(mean_of(th));
            }
          }
          for (auto* sr : {&elbo_s, &ev_s})
            if (!sr->x.empty()) curves.push_back(std::move(*sr));
        }
      if (!theory.x.empty()) curves.push_back(std::move(theory));
      if (!curves.empty()) plots.push_back({"evidence_curve.svg", {"ELBO and log evidence", "K", "log scale"}, std::move(curves)});
      s["groups"] = groups;
      break;
    }
    case PresetKind::faithful:
    case PresetKind::selection_accuracy: {
      // k_hat per cell for each phi0 (ELBO) and for BIC
      const auto selections = [&](const CellResult& r) {
        std::map<std::string, int> out;
        for (double phi0 : p.phi0s) {
          std::vector<double> e;
          for (int K : p.ks) {
            const ResultRow* row = find_row(r, K, phi0);
            e.push_back(row ? row->elbo : std::numeric_limits<double>::quiet_NaN());
          }
          out["elbo_phi0=" + num_key(phi0)] = select_from(p.ks, e);
        }
        if (p.with_bic) {
          std::vector<double> b;
          for (int K : p.ks) {
            const ResultRow* row = find_row(r, K, p.phi0s.front());
            b.push_back(row ? row->bic : std::numeric_limits<double>::quiet_NaN());
          }
          out["bic"] = select_from(p.ks, b);
        }
        return out;
      };
      std::vector<std::string> methods;
      for (double phi0 : p.phi0s) methods.push_back("elbo_phi0=" + num_key(phi0));
      if (p.with_bic) methods.push_back("bic");

      json groups = json::array();
      std::map<std::string, Series> curves;
      const bool faithful = p.kind == PresetKind::faithful;
      const std::size_t n_groups = faithful ? p.fractions.size() : p.ns.size();
      if (faithful && oc.results.front().error.empty()) {
        json full = json::object();
        for (const auto& [m, k] : selections(oc.results.front())) full[m] = k;
        s["full_data"] = full;
      }
      for (std::size_t gi = 0; gi < n_groups; ++gi) {
        std::map<std::string, std::vector<int>> picks;
        Eigen::Index n = 0;
        for (std::size_t i = 0; i < oc.cells.size(); ++i) {
          const auto& c = oc.cells[i];
          const bool member = faithful ? c.fraction_index == static_cast<int>(gi) : c.n == p.ns[gi];
          if (!member || !oc.results[i].error.empty()) continue;
          if (!oc.results[i].rows.empty()) n = oc.results[i].rows.front().n;
          for (const auto& [m, k] : selections(oc.results[i])) picks[m].push_back(k);
        }
        json grp = faithful ? json{{"fraction", p.fractions[gi]}, {"n", n}} : json{{"n", p.ns[gi]}};
        json per_method = json::object();
        for (const auto& m : methods) {
          const auto& v = picks[m];
          std::vector<double> dv(v.begin(), v.end());
          const double acc = v.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : static_cast<double>(std::count(v.begin(), v.end(), p.k_star)) / static_cast<double>(v.size());
          per_method[m] = json{{"k_hat", v}, {"mean_k_hat", number(mean_of(dv))}, {"accuracy", number(acc)}};
          auto& curve = curves[m];
          curve.name = m;
          const double y = faithful ? mean_of(dv) : acc;
          if (std::isfinite(y)) {
            curve.x.push_back(faithful ? 100.0 * p.fractions[gi] : static_cast<double>(p.ns[gi]));
            curve.y.push_back(y);
          }
        }
        grp["methods"] = per_method;
        groups.push_back(std::move(grp));
      }
      std::vector<Series> series;
      for (const auto& m : methods)
        if (!curves[m].x.empty()) series.push_back(curves[m]);
      if (!series.empty()) {
        if (faithful)
          plots.push_back({"faithful.svg", {"Old Faithful: mean selected K", "fraction of data (%)", "mean K-hat"}, std::move(series)});
        else
          plots.push_back({p.name + ".svg", {p.name + ": selection accuracy (K* = " + std::to_string(p.k_star) + ")", "n", "P(K-hat = K*)"},
                           std::move(series)});
      }
      s["groups"] = groups;
      break;
    }
  }
  return s;
}

inline std::string results_csv(const ExperimentOutcome& oc) {
  std::string out = "cell_key,k,phi0,n,rep,elbo,bic,w1,redundant_mass\n";
  for (const auto& r : oc.results)
    for (const auto& row : r.rows) {
      out += r.key + ',' + std::to_string(row.k) + ',' + format_double(row.phi0) + ',' + std::to_string(row.n) + ',' +
             std::to_string(row.rep) + ',' + format_double(row.elbo) + ',' + format_double(row.bic) + ',' +
             format_double(row.w1) + ',' + format_double(row.redundant_mass) + '\n';
    }
  return out;
}

}  // namespace detail

/// Applies option overrides to a named preset.
inline ExperimentPreset configure_preset(const std::string& name, const ExperimentOptions& o) {
  ExperimentPreset p = make_preset(name);
  if (o.reps) p.reps = *o.reps;
  if (!o.ns.empty()) p.ns = o.ns;
  if (!o.phi0s.empty()) p.phi0s = o.phi0s;
  if (!o.ks.empty()) p.ks = o.ks;
  if (!o.fractions.empty()) p.fractions = o.fractions;
  if (o.chain) p.chain = *o.chain;
  if (o.rungs) p.rungs = *o.rungs;
  p.validate();
  return p;
}

/// Runs every grid cell of the preset. When out_dir is nonempty, writes results.csv,
/// summary.json and the preset's SVG plots there.
inline ExperimentOutcome run_experiment(const std::string& preset_name, std::uint64_t seed,
                                        const std::filesystem::path& out_dir, const ExperimentOptions& options = {}) {
  ExperimentOutcome oc;
  oc.preset = configure_preset(preset_name, options);
  oc.seed = seed;
  oc.cells = detail::build_cells(oc.preset);
  oc.results.resize(oc.cells.size());

  std::optional<Dataset> faithful;
  if (oc.preset.kind == PresetKind::faithful) faithful = load_faithful(options.faithful_path);

  std::vector<std::size_t> order(oc.cells.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (options.shuffle_execution) {
    Rng rng = make_rng(*options.shuffle_execution, "execution-order");
    std::shuffle(order.begin(), order.end(), rng);
  }
  const Dataset* faithful_ptr = faithful ? &*faithful : nullptr;
  parallel_for(order.size(), options.jobs, [&](std::size_t j) {
    const std::size_t i = order[j];
    oc.results[i] = detail::run_cell(oc.preset, oc.cells[i], seed, options, faithful_ptr);
  });

  std::vector<detail::PlotRequest> plots;
  oc.summary = detail::summarize(oc, plots);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    {
      std::ofstream csv(out_dir / "results.csv", std::ios::binary);
      if (!csv) throw std::runtime_error("cannot write " + (out_dir / "results.csv").string());
      csv << detail::results_csv(oc);
    }
    detail::write_json_file(oc.summary, out_dir / "summary.json");
    for (const auto& plot : plots) emit_svg_lines(plot.series, plot.labels, out_dir / plot.file);
  }
  return oc;
}

}  // namespace vbmix
