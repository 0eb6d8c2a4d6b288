#pragma once

// File formats: observation CSV, JSON reports, key=value configuration files.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <variant>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vbmix/errors.hpp"
#include "vbmix/evidence.hpp"
#include "vbmix/family.hpp"
#include "vbmix/mixture.hpp"
#include "vbmix/selection.hpp"
#include "vbmix/vb.hpp"

namespace vbmix {

inline constexpr std::string_view kVersion = "1.0.0";
inline constexpr int kReportFormat = 1;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Reads a header `x1,...,xd` followed by one observation per line.
inline Dataset load_dataset_csv(const std::filesystem::path& path, const FamilySpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  const int d = spec.observation_dim();
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("no observations");
  ++line_no;
  const auto header = detail::split(detail::trim(line), ',');
  if (static_cast<int>(header.size()) != d) {
    throw DataError("header has " + std::to_string(header.size()) + " columns, expected " + std::to_string(d), line_no);
  }
  for (int j = 0; j < d; ++j) {
    if (header[static_cast<std::size_t>(j)] != "x" + std::to_string(j + 1))
      throw DataError("header column " + std::to_string(j + 1) + " must be named x" + std::to_string(j + 1), line_no);
  }

  std::vector<double> values;
  std::vector<std::size_t> lines;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto fields = detail::split(body, ',');
    if (static_cast<int>(fields.size()) != d)
      throw DataError("row has " + std::to_string(fields.size()) + " fields, expected " + std::to_string(d), line_no);
    for (auto f : fields) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty() || !std::isfinite(v))
        throw DataError("non-numeric cell '" + std::string(f) + "'", line_no);
      values.push_back(v);
    }
    lines.push_back(line_no);
  }
  if (lines.empty()) throw DataError("no observations");

  Dataset data;
  data.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(lines.size()), d);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    try {
      check_observation(spec, data.x.row(i).transpose());
    } catch (const DomainError& e) {
      throw DataError(e.what(), lines[static_cast<std::size_t>(i)]);
    }
  }
  return data;
}

inline void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (Eigen::Index j = 0; j < data.dim(); ++j) out << (j ? "," : "") << "x" << j + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << (j ? "," : "") << detail::format_double(data.x(i, j));
    out << '\n';
  }
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// ---- JSON ------------------------------------------------------------------------------

namespace detail {

using nlohmann::json;

inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}
inline json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
  return a;
}
inline Eigen::VectorXd vector_from(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_or_nan(a[i]);
  return v;
}
inline json doubles_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}
inline std::vector<double> doubles_from(const json& a) {
  std::vector<double> v;
  for (const auto& x : a) v.push_back(number_or_nan(x));
  return v;
}

inline json versions() { return json{{"vbmix", std::string(kVersion)}, {"format", kReportFormat}}; }

inline FamilyKind family_from_name(std::string_view name) {
  if (name == "gaussian_location" || name == "gaussian") return FamilyKind::gaussian_location;
  if (name == "exponential_rate" || name == "exponential") return FamilyKind::exponential_rate;
  if (name == "multinomial") return FamilyKind::multinomial;
  throw DataError("unknown family '" + std::string(name) + "'");
}

inline json family_json(const FamilySpec& s) {
  return json{{"family", std::string(to_string(s.kind))}, {"dim", s.dim}, {"sigma2", s.sigma2}, {"trials", s.trials}};
}
inline FamilySpec family_from(const json& j) {
  FamilySpec s{family_from_name(j.at("family").get<std::string>()), j.at("dim").get<int>(), j.at("sigma2").get<double>(),
               j.at("trials").get<int>()};
  s.validate();
  return s;
}

inline json conjugate_json(const ConjugateParams& p) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, NormalParams>) return json{{"mean", vector_json(v.mean)}, {"precision", v.precision}};
        else if constexpr (std::is_same_v<T, GammaParams>) return json{{"shape", v.shape}, {"rate", v.rate}};
        else return json{{"concentration", vector_json(v.concentration)}};
      },
      p);
}
inline ConjugateParams conjugate_from(const json& j) {
  if (j.contains("mean")) return NormalParams{vector_from(j.at("mean")), j.at("precision").get<double>()};
  if (j.contains("shape")) return GammaParams{j.at("shape").get<double>(), j.at("rate").get<double>()};
  return DirichletParams{vector_from(j.at("concentration"))};
}

/// Pretty printer that writes every float with %.17g so doubles survive a round trip.
inline void dump_json(const json& j, std::string& out, int depth) {
  const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(2 * depth), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) { out += "{}"; return; }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + json(it.key()).dump() + ": ";
        dump_json(it.value(), out, depth + 1);
      }
      out += "\n" + close + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) { out += "[]"; return; }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        dump_json(j[i], out, depth + 1);
      }
      out += "\n" + close + "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) { out += "null"; return; }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      if (std::string_view(buf).find_first_of(".eEn") == std::string_view::npos) out += ".0";
      return;
    }
    default:
      out += j.dump();
  }
}

inline std::string dump_json(const json& j) {
  std::string out;
  dump_json(j, out, 0);
  out += '\n';
  return out;
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << dump_json(j);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const SelectionReport& r) {
  using detail::json;
  json per_k = json::array();
  for (const auto& rec : r.per_k) {
    per_k.push_back(json{{"k", rec.k},
                         {"elbo", detail::number(rec.elbo)},
                         {"bic", detail::number(rec.bic)},
                         {"loglik", detail::number(rec.loglik)},
                         {"k_init", rec.k_init},
                         {"iterations", rec.iterations},
                         {"converged", rec.converged},
                         {"restart_elbos", detail::doubles_json(rec.restart_elbos)}});
  }
  return json{{"report", "selection"},
              {"k_hat", r.k_hat_elbo},
              {"k_hat_bic", r.k_hat_bic},
              {"n", r.n},
              {"phi0", r.phi0},
              {"seeds", json{{"master", r.seed}}},
              {"versions", detail::versions()},
              {"per_k", per_k}};
}

inline SelectionReport selection_report_from_json(const nlohmann::json& j) {
  SelectionReport r;
  r.k_hat_elbo = j.at("k_hat").get<int>();
  r.k_hat_bic = j.at("k_hat_bic").get<int>();
  r.n = j.at("n").get<Eigen::Index>();
  r.phi0 = j.at("phi0").get<double>();
  r.seed = j.at("seeds").at("master").get<std::uint64_t>();
  for (const auto& e : j.at("per_k")) {
    SelectionRecord rec;
    rec.k = e.at("k").get<int>();
    rec.elbo = detail::number_or_nan(e.at("elbo"));
    rec.bic = detail::number_or_nan(e.at("bic"));
    rec.loglik = detail::number_or_nan(e.at("loglik"));
    rec.k_init = e.at("k_init").get<int>();
    rec.iterations = e.at("iterations").get<int>();
    rec.converged = e.at("converged").get<bool>();
    rec.restart_elbos = detail::doubles_from(e.at("restart_elbos"));
    r.per_k.push_back(std::move(rec));
  }
  return r;
}

/// FitResult without the n x K responsibility matrix.
inline nlohmann::json to_json(const FitResult& f, const FamilySpec& spec, double phi0) {
  using detail::json;
  json means = json::array();
  for (const auto& m : f.component_means) means.push_back(detail::vector_json(m));
  json posts = json::array();
  for (const auto& q : f.state.component_posteriors) posts.push_back(detail::conjugate_json(q));
  return json{{"report", "fit"},
              {"k", f.num_components()},
              {"phi0", phi0},
              {"family", detail::family_json(spec)},
              {"elbo", detail::number(f.elbo)},
              {"iterations", f.iterations},
              {"converged", f.converged},
              {"weight_means", detail::vector_json(f.weight_means)},
              {"component_means", means},
              {"counts", detail::vector_json(f.state.counts)},
              {"dirichlet_alpha", detail::vector_json(f.state.dirichlet_alpha)},
              {"component_posteriors", posts},
              {"elbo_trace", detail::doubles_json(f.state.elbo_trace)},
              {"k_init", f.k_init},
              {"restart_elbos", detail::doubles_json(f.restart_elbos)},
              {"seeds", json{{"init", f.init_seed}}},
              {"versions", detail::versions()}};
}

inline FitResult fit_result_from_json(const nlohmann::json& j) {
  FitResult f;
  f.elbo = detail::number_or_nan(j.at("elbo"));
  f.iterations = j.at("iterations").get<int>();
  f.converged = j.at("converged").get<bool>();
  f.weight_means = detail::vector_from(j.at("weight_means"));
  for (const auto& m : j.at("component_means")) f.component_means.push_back(detail::vector_from(m));
  f.state.counts = detail::vector_from(j.at("counts"));
  f.state.dirichlet_alpha = detail::vector_from(j.at("dirichlet_alpha"));
  for (const auto& q : j.at("component_posteriors")) f.state.component_posteriors.push_back(detail::conjugate_from(q));
  f.state.elbo_trace = detail::doubles_from(j.at("elbo_trace"));
  f.k_init = j.at("k_init").get<int>();
  f.restart_elbos = detail::doubles_from(j.at("restart_elbos"));
  f.init_seed = j.at("seeds").at("init").get<std::uint64_t>();
  return f;
}

inline nlohmann::json to_json(const EvidenceEstimate& e) {
  using detail::json;
  return json{{"report", "evidence"},
              {"log_evidence", detail::number(e.log_evidence)},
              {"std_error", detail::number(e.std_error)},
              {"ladder", detail::doubles_json(e.ladder)},
              {"acceptance_rates", detail::doubles_json(e.acceptance_rates)},
              {"rung_log_ratios", detail::doubles_json(e.rung_log_ratios)},
              {"n_samples", e.n_samples},
              {"burn_in", e.burn_in},
              {"seeds", json{{"master", e.seed}}},
              {"versions", detail::versions()}};
}

inline EvidenceEstimate evidence_estimate_from_json(const nlohmann::json& j) {
  EvidenceEstimate e;
  e.log_evidence = detail::number_or_nan(j.at("log_evidence"));
  e.std_error = detail::number_or_nan(j.at("std_error"));
  e.ladder = detail::doubles_from(j.at("ladder"));
  e.acceptance_rates = detail::doubles_from(j.at("acceptance_rates"));
  e.rung_log_ratios = detail::doubles_from(j.at("rung_log_ratios"));
  e.n_samples = j.at("n_samples").get<int>();
  e.burn_in = j.at("burn_in").get<int>();
  e.seed = j.at("seeds").at("master").get<std::uint64_t>();
  return e;
}

inline void write_report_json(const SelectionReport& r, const std::filesystem::path& path) {
  detail::write_json_file(to_json(r), path);
}
inline void write_report_json(const FitResult& f, const FamilySpec& spec, double phi0, const std::filesystem::path& path) {
  detail::write_json_file(to_json(f, spec, phi0), path);
}
inline void write_report_json(const EvidenceEstimate& e, const std::filesystem::path& path) {
  detail::write_json_file(to_json(e), path);
}

inline SelectionReport read_selection_report(const std::filesystem::path& path) {
  return selection_report_from_json(detail::read_json_file(path));
}
inline FitResult read_fit_result(const std::filesystem::path& path) {
  return fit_result_from_json(detail::read_json_file(path));
}
inline EvidenceEstimate read_evidence_estimate(const std::filesystem::path& path) {
  return evidence_estimate_from_json(detail::read_json_file(path));
}

// ---- configuration -----------------------------------------------------------------------

/// Plain `key = value` lines; '#' starts a comment.
inline std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = detail::trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw DataError("expected key=value", line_no);
    const auto key = detail::trim(body.substr(0, eq));
    if (key.empty()) throw DataError("empty key", line_no);
    out[std::string(key)] = std::string(detail::trim(body.substr(eq + 1)));
  }
  return out;
}

}  // namespace vbmix
