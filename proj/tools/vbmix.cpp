// vbmix command-line tool: simulate, fit, select, evidence, experiment.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vbmix/vbmix.hpp"

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumerical = 3;

struct FamilyArgs {
  std::string family = "gaussian";
  double sigma2 = 1.0;
  int trials = 1;
};

void add_family_options(CLI::App* cmd, FamilyArgs& f) {
  cmd->add_option("--family", f.family, "gaussian | exponential | multinomial")->capture_default_str();
  cmd->add_option("--sigma2", f.sigma2, "known variance (gaussian)")->capture_default_str();
  cmd->add_option("--trials", f.trials, "trials per observation (multinomial)")->capture_default_str();
}

/// Number of columns named in the CSV header; the family dimension follows from it.
int header_columns(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw vbmix::DataError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw vbmix::DataError("no observations", 1);
  return static_cast<int>(std::count(header.begin(), header.end(), ',')) + 1;
}

vbmix::FamilySpec family_for(const FamilyArgs& f, const std::filesystem::path& data) {
  const int cols = header_columns(data);
  switch (vbmix::detail::family_from_name(f.family)) {
    case vbmix::FamilyKind::gaussian_location:
      return vbmix::FamilySpec::gaussian_location(cols, f.sigma2);
    case vbmix::FamilyKind::exponential_rate:
      return vbmix::FamilySpec::exponential_rate();
    case vbmix::FamilyKind::multinomial:
      return vbmix::FamilySpec::multinomial(cols, f.trials);
  }
  throw vbmix::ContractViolation("unknown family");
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

/// Appends `--key=value` for config entries the command line did not set (flags > file > defaults).
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;
  for (const auto& [key, value] : vbmix::read_config_file(path)) {
    const std::string flag = "--" + key;
    bool given = false;
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
    if (!given) args.push_back(flag + "=" + value);
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational Bayes model selection for finite mixtures"};
  app.set_version_flag("--version", std::string(vbmix::kVersion));
  app.require_subcommand(1);
  app.add_option("--config", "key=value file; command-line flags take precedence");

  std::uint64_t seed = 1;

  // simulate
  auto* sim = app.add_subcommand("simulate", "draw a dataset from a preset's data-generating mixture");
  std::string sim_preset;
  long long sim_n = 0;
  std::string sim_out;
  sim->add_option("--preset", sim_preset, "figure1 | evidence_curve | preset1..6 | ...")->required();
  sim->add_option("--n", sim_n, "sample size")->required()->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "master seed")->capture_default_str();
  sim->add_option("--out", sim_out, "output CSV")->required();

  // fit
  auto* fit = app.add_subcommand("fit", "CAVI fit with K components (best of K initializations)");
  FamilyArgs fit_family;
  std::string fit_data, fit_out;
  int fit_k = 0;
  double fit_phi0 = 1.0;
  vbmix::CaviOptions fit_cavi;
  fit->add_option("--data", fit_data, "input CSV")->required();
  add_family_options(fit, fit_family);
  fit->add_option("--k", fit_k, "number of components")->required()->check(CLI::PositiveNumber);
  fit->add_option("--phi0", fit_phi0, "Dirichlet concentration")->capture_default_str();
  fit->add_option("--tol", fit_cavi.tol, "relative ELBO tolerance")->capture_default_str();
  fit->add_option("--max-iter", fit_cavi.max_iter, "sweep limit")->capture_default_str();
  fit->add_option("--seed", seed, "master seed")->capture_default_str();
  fit->add_option("--out", fit_out, "output JSON")->required();

  // select
  auto* sel = app.add_subcommand("select", "choose K by maximal ELBO (and BIC)");
  FamilyArgs sel_family;
  std::string sel_data, sel_out;
  int sel_kmax = 0;
  double sel_phi0 = 1.0;
  bool sel_no_bic = false;
  vbmix::SelectOptions sel_options;
  sel->add_option("--data", sel_data, "input CSV")->required();
  add_family_options(sel, sel_family);
  sel->add_option("--kmax", sel_kmax, "largest K considered")->required()->check(CLI::PositiveNumber);
  sel->add_option("--phi0", sel_phi0, "Dirichlet concentration")->capture_default_str();
  sel->add_flag("--no-bic", sel_no_bic, "skip the EM/BIC comparison");
  sel->add_option("--tol", sel_options.cavi.tol, "relative ELBO tolerance")->capture_default_str();
  sel->add_option("--max-iter", sel_options.cavi.max_iter, "sweep limit")->capture_default_str();
  sel->add_option("--seed", seed, "master seed")->capture_default_str();
  sel->add_option("--out", sel_out, "output JSON")->required();

  // evidence
  auto* evi = app.add_subcommand("evidence", "stepping-stone estimate of the log evidence");
  FamilyArgs evi_family;
  std::string evi_data, evi_out;
  int evi_k = 0, evi_rungs = 32;
  double evi_phi0 = 1.0;
  vbmix::ChainSettings chain;
  evi->add_option("--data", evi_data, "input CSV")->required();
  add_family_options(evi, evi_family);
  evi->add_option("--k", evi_k, "number of components")->required()->check(CLI::PositiveNumber);
  evi->add_option("--phi0", evi_phi0, "Dirichlet concentration")->capture_default_str();
  evi->add_option("--rungs", evi_rungs, "temperature ladder size")->capture_default_str();
  evi->add_option("--samples", chain.n_samples, "recorded sweeps per rung")->capture_default_str();
  evi->add_option("--burn-in", chain.burn_in, "discarded sweeps per rung")->capture_default_str();
  evi->add_option("--seed", seed, "master seed")->capture_default_str();
  evi->add_option("--out", evi_out, "output JSON")->required();

  // experiment
  auto* exp = app.add_subcommand("experiment", "run a named preset grid");
  std::string exp_name, exp_out;
  int exp_reps = 0;
  vbmix::ExperimentOptions exp_options;
  exp->add_option("name", exp_name, "preset name")->required();
  exp->add_option("--seed", seed, "master seed")->capture_default_str();
  exp->add_option("--out", exp_out, "output directory")->required();
  exp->add_option("--reps", exp_reps, "replicates per cell (preset default when omitted)")->check(CLI::PositiveNumber);
  exp->add_option("--jobs", exp_options.jobs, "concurrent cells")->capture_default_str()->check(CLI::PositiveNumber);
  exp->add_option("--n", exp_options.ns, "override sample sizes");
  exp->add_option("--phi0", exp_options.phi0s, "override phi0 grid");
  exp->add_option("--k", exp_options.ks, "override K grid");
  exp->add_option("--fractions", exp_options.fractions, "override faithful subsample fractions");
  exp->add_option("--data", exp_options.faithful_path, "Old Faithful CSV")->capture_default_str();

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = merge_config(std::move(args));
    std::vector<const char*> cargs;
    for (const auto& a : args) cargs.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : kUsage;
    }

    if (*sim) {
      const vbmix::ExperimentPreset preset = vbmix::make_preset(sim_preset);
      if (preset.truth.weights.empty()) throw vbmix::ContractViolation("preset '" + sim_preset + "' has no data-generating model");
      const vbmix::Dataset data = vbmix::sample(preset.truth, sim_n, seed);
      vbmix::write_dataset_csv(data, sim_out);
      std::printf("wrote %lld observations (d=%lld) to %s\n", static_cast<long long>(data.size()),
                  static_cast<long long>(data.dim()), sim_out.c_str());
    } else if (*fit) {
      const vbmix::FamilySpec spec = family_for(fit_family, fit_data);
      const vbmix::Dataset data = vbmix::load_dataset_csv(fit_data, spec);
      const vbmix::FitResult r =
          vbmix::fit_best(spec, data, fit_k, vbmix::make_priors(spec, fit_phi0), seed, fit_cavi);
      vbmix::write_report_json(r, spec, fit_phi0, fit_out);
      std::printf("n=%lld K=%d elbo=%.10g iterations=%d converged=%s k_init=%d\n", static_cast<long long>(data.size()),
                  fit_k, r.elbo, r.iterations, r.converged ? "yes" : "no", r.k_init);
    } else if (*sel) {
      const vbmix::FamilySpec spec = family_for(sel_family, sel_data);
      const vbmix::Dataset data = vbmix::load_dataset_csv(sel_data, spec);
      sel_options.with_bic = !sel_no_bic;
      const vbmix::SelectionReport r =
          vbmix::select_k(spec, data, sel_kmax, vbmix::make_priors(spec, sel_phi0), seed, sel_options);
      vbmix::write_report_json(r, sel_out);
      for (const auto& rec : r.per_k) std::printf("K=%d elbo=%.10g bic=%.10g\n", rec.k, rec.elbo, rec.bic);
      std::printf("k_hat=%d k_hat_bic=%d\n", r.k_hat_elbo, r.k_hat_bic);
    } else if (*evi) {
      const vbmix::FamilySpec spec = family_for(evi_family, evi_data);
      const vbmix::Dataset data = vbmix::load_dataset_csv(evi_data, spec);
      chain.seed = seed;
      const vbmix::EvidenceEstimate e =
          vbmix::stepping_stone_evidence(spec, data, evi_k, vbmix::make_priors(spec, evi_phi0), chain, evi_rungs);
      vbmix::write_report_json(e, evi_out);
      std::printf("log_evidence=%.10g std_error=%.3g\n", e.log_evidence, e.std_error);
    } else if (*exp) {
      if (exp_reps > 0) exp_options.reps = exp_reps;
      const vbmix::ExperimentOutcome oc = vbmix::run_experiment(exp_name, seed, exp_out, exp_options);
      std::size_t failed = 0;
      for (const auto& r : oc.results)
        if (!r.error.empty()) ++failed;
      std::printf("%s: %zu cells (%zu failed), n = {%s}, reps=%d -> %s\n", oc.preset.name.c_str(), oc.results.size(),
                  failed, join(oc.preset.ns).c_str(), oc.preset.reps, exp_out.c_str());
    }
  } catch (const vbmix::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const vbmix::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::invalid_argument& e) {  // ContractViolation
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::logic_error& e) {  // DomainError, CapacityError
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {  // I/O
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return 0;
}
