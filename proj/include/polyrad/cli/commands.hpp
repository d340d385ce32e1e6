#pragma once

// Subcommand bodies. Each returns its full output as text; the caller is the
// single writer (stdout or --out). Exceptions escape as config errors.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "polyrad/bounds.hpp"
#include "polyrad/cli/config.hpp"
#include "polyrad/linalg.hpp"
#include "polyrad/polynet.hpp"
#include "polyrad/rademacher.hpp"
#include "polyrad/random.hpp"
#include "polyrad/verify.hpp"

namespace polyrad::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitVerification = 3;

// Locale-free, 17 significant digits.
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

inline std::string format_bool(bool b) { return b ? "true" : "false"; }

struct CsvTable {
  std::string header;
  std::vector<std::string> rows;

  std::string text(bool with_header = true) const {
    std::string out;
    if (with_header) out += header + "\n";
    for (const auto& r : rows) out += r + "\n";
    return out;
  }
};

// Writes the table to path. With append, an existing nonempty file keeps its
// rows and gets no second header.
inline void write_csv(const CsvTable& table, const std::string& path, bool append) {
  bool need_header = true;
  if (append) {
    std::ifstream probe(path, std::ios::binary | std::ios::ate);
    need_header = !probe || probe.tellg() <= 0;
  }
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  out << table.text(need_header);
}

namespace detail {

template <typename... T>
std::string csv_row(const T&... fields) {
  std::string row;
  auto add = [&row](const std::string& f) {
    if (!row.empty()) row += ',';
    row += f;
  };
  (add(fields), ...);
  return row;
}

inline std::vector<Vector> config_inputs(const RunConfig& cfg) {
  return sample_inputs(cfg.samples, cfg.spec.dims.front(), cfg.spec.p, cfg.spec.input_radius,
                       derive_seed(cfg.seed, 0x1D));
}

struct GammaChoice {
  double value;
  std::string source;
};

// Gamma from the config, or prod ||W_j||_{q,inf} of a seeded net on the budget
// boundary.
inline GammaChoice resolve_gamma(const RunConfig& cfg) {
  if (cfg.spec.gamma) return {*cfg.spec.gamma, "config"};
  const PolyNet net = sample_feasible_net(cfg.spec, 1.0, derive_seed(cfg.seed, 0xB0));
  return {gamma_of_net(net, cfg.spec.q), "gamma_of_net(sampled boundary net, seed " + std::to_string(cfg.seed) + ")"};
}

inline nlohmann::json report_json(const BoundReport& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["value"] = r.value;
  j["inputs"] = r.inputs;
  j["constant_c"] = r.constant_c;
  j["flags"] = r.flags;
  if (!r.table.empty()) j["table"] = r.table;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

}  // namespace detail

// All bounds for the configured class as one JSON document. The perturbation
// and min-ratio entries carry one row per r; norm products are taken at the
// budget boundary (prod ||W_j||_{q,p} = prod M(j)), which is also what the
// prior bounds use since no weights are given.
inline std::string cmd_bound(const RunConfig& cfg) {
  const ClassSpec& spec = cfg.spec;
  const std::size_t d = spec.depth();
  const double mprod = spec.budget_product();
  const double m = static_cast<double>(cfg.samples);
  const auto xs = detail::config_inputs(cfg);
  const auto gamma = detail::resolve_gamma(cfg);
  polyrad::detail::require_ratio(mprod, gamma.value);

  nlohmann::json bounds = nlohmann::json::array();
  bounds.push_back(detail::report_json(depth_dependent_bound(spec.budgets, xs, spec.p)));
  bounds.push_back(detail::report_json(depth_independent_bound(spec.input_radius, mprod, gamma.value,
                                                               cfg.gamma_loss, m, static_cast<double>(d),
                                                               cfg.constant_c)));

  nlohmann::json perturbation;
  perturbation["name"] = "perturbation";
  perturbation["mode"] = "exact";
  perturbation["per_r"] = nlohmann::json::array();
  nlohmann::json ratio;
  ratio["name"] = "min_ratio";
  ratio["per_r"] = nlohmann::json::array();
  double best_perturbation = std::numeric_limits<double>::infinity();
  for (std::size_t r = 1; r <= d; ++r) {
    const auto rep = perturbation_bound(spec.input_radius, mprod, spec.p, mprod, gamma.value, r,
                                        PerturbationMode::exact);
    best_perturbation = std::min(best_perturbation, rep.value);
    auto row = detail::report_json(rep);
    row.erase("name");
    row["r"] = r;
    perturbation["per_r"].push_back(row);
    ratio["per_r"].push_back({{"r", r}, {"value", min_ratio_bound(mprod, gamma.value, r)}});
  }
  perturbation["value"] = best_perturbation;
  ratio["value"] = ratio["per_r"].back()["value"];
  bounds.push_back(perturbation);
  bounds.push_back(ratio);

  // Prefix complexities: the depth-dependent bound of the depth-r prefix class.
  std::vector<double> prefix;
  for (std::size_t r = 1; r <= d; ++r) {
    prefix.push_back(depth_dependent_bound(std::span<const double>(spec.budgets).first(r), xs, spec.p).value);
  }
  auto rdep = detail::report_json(
      r_dependent_bound(spec.input_radius, spec.budgets, gamma.value, cfg.gamma_loss, m, prefix, spec.p,
                        cfg.constant_c));
  rdep["prefix_complexity"] = prefix;
  rdep["prefix_source"] = "depth_dependent bound of the prefix class";
  bounds.push_back(rdep);

  bounds.push_back({{"name", "prior_exponential"},
                    {"value", prior_bound_exponential(spec.input_radius, spec.budgets, m)},
                    {"note", "layer budgets stand in for Frobenius norms"}});
  bounds.push_back({{"name", "prior_spectral"},
                    {"value", prior_bound_spectral(spec.input_radius, spec.budgets, static_cast<double>(d), m)},
                    {"note", "layer budgets stand in for spectral norms"}});

  nlohmann::json doc;
  doc["class"] = {{"dims", spec.dims},
                  {"k", spec.degree},
                  {"q", spec.q.to_string()},
                  {"p", spec.p.to_string()},
                  {"B", spec.input_radius},
                  {"M", spec.budgets},
                  {"Mprod", mprod},
                  {"canonical", spec.canonical},
                  {"m", cfg.samples},
                  {"seed", cfg.seed}};
  doc["Gamma"] = gamma.value;
  doc["gamma_source"] = gamma.source;
  doc["bounds"] = bounds;
  return doc.dump(2) + "\n";
}

inline const char* kEstimateHeader = "d,k,q,p,m,B,Mprod,mean,stderr,depth_dep_bound,depth_indep_bound,violation_flag";

// One row. violation_flag is set when mean - 3 stderr exceeds the
// depth-dependent bound.
inline CsvTable cmd_estimate(const RunConfig& cfg) {
  const ClassSpec& spec = cfg.spec;
  if (cfg.draws == 0) throw std::invalid_argument("draws must be >= 1");
  const auto xs = detail::config_inputs(cfg);
  OptimizerConfig opt = cfg.optimizer;
  opt.seed = cfg.seed;
  const auto est = estimate(spec, xs, cfg.draws, opt);
  const double mprod = spec.budget_product();
  const double dep = depth_dependent_bound(spec.budgets, xs, spec.p).value;
  std::string indep = "nan";
  if (cfg.samples > 1) {
    const auto gamma = detail::resolve_gamma(cfg);
    indep = format_double(depth_independent_bound(spec.input_radius, mprod, gamma.value, cfg.gamma_loss,
                                                  static_cast<double>(cfg.samples),
                                                  static_cast<double>(spec.depth()), cfg.constant_c)
                              .value);
  }
  const bool violation = est.mean - 3.0 * est.standard_error > dep;
  CsvTable t;
  t.header = kEstimateHeader;
  t.rows.push_back(detail::csv_row(std::to_string(spec.depth()), std::to_string(spec.degree), spec.q.to_string(),
                                   spec.p.to_string(), std::to_string(cfg.samples), format_double(spec.input_radius),
                                   format_double(mprod), format_double(est.mean), format_double(est.standard_error),
                                   format_double(dep), indep, format_bool(violation)));
  return t;
}

inline VerifyConfig verify_config(const RunConfig& cfg, bool break_rank1) {
  VerifyConfig v;
  v.degrees = cfg.verify_degrees;
  if (cfg.exponents_given) v.exponent_pairs = {{cfg.spec.q, cfg.spec.p}};
  v.nets = cfg.verify_nets;
  v.samples = cfg.verify_samples;
  v.matrices = cfg.verify_matrices;
  v.input_radius = cfg.spec.input_radius;
  v.seed = cfg.seed;
  v.break_rank1 = break_rank1;
  return v;
}

struct VerifyOutcome {
  std::vector<SuiteResult> suites;
  std::string table;
  bool passed = true;
};

inline VerifyOutcome cmd_verify(const RunConfig& cfg, bool break_rank1 = false) {
  VerifyOutcome out;
  out.suites = run_verification(verify_config(cfg, break_rank1));
  std::ostringstream ss;
  ss << std::left << std::setw(24) << "suite" << std::right << std::setw(10) << "checks" << std::setw(10)
     << "failures" << std::setw(10) << "seconds" << "  status\n";
  for (const auto& s : out.suites) {
    out.passed = out.passed && s.passed();
    ss << std::left << std::setw(24) << s.name << std::right << std::setw(10) << s.checks << std::setw(10)
       << s.failures << std::setw(10) << std::fixed << std::setprecision(3) << s.seconds << "  "
       << (s.passed() ? "PASS" : "FAIL");
    if (!s.first_failure.empty()) ss << "  (first: " << s.first_failure << ")";
    ss << "\n";
  }
  out.table = ss.str();
  return out;
}

struct SweepRow {
  std::size_t d = 0;
  int k = 0;
  std::size_t m = 0;
  double radius = 0.0;
  double mprod = 0.0;
  double gamma = 0.0;
  double depth_dependent = 0.0;
  double log_branch = 0.0;
  double sqrt_branch = 0.0;
  double depth_independent = 0.0;
  double prior_exponential = 0.0;
  double prior_spectral = 0.0;
  double prior_spectral_cuberoot_depth = 0.0;
  std::optional<double> estimate_mean;
  std::optional<double> estimate_stderr;
};

inline const char* kSweepHeader =
    "d,k,m,B,Mprod,Gamma,depth_dependent,log_branch,sqrt_branch,depth_independent,prior_exponential,"
    "prior_spectral,prior_spectral_cuberoot_depth,estimate_mean,estimate_stderr";

// Class used for one sweep cell: input width dims[0], hidden width dims[1]
// (or dims[0] for a depth-1 config), scalar output, canonical budgets.
inline ClassSpec sweep_class(const RunConfig& cfg, std::size_t d, int k) {
  ClassSpec s = cfg.spec;
  const std::size_t hidden = cfg.spec.dims.size() > 2 ? cfg.spec.dims[1] : cfg.spec.dims[0];
  s.dims.assign(d + 1, hidden);
  s.dims.front() = cfg.spec.dims.front();
  s.dims.back() = 1;
  s.degree = k;
  s.budgets = canonical_budgets(d, k, s.input_radius);
  s.canonical = true;
  s.gamma.reset();
  return s;
}

// Grid d x k x m. With sweep_Mprod set every row shares that product (only
// the closed-form columns are meaningful then); otherwise rows use the
// canonical budgets of their (d, k). Gamma is sweep_Gamma, else Gamma, else
// min(1, Mprod).
inline std::vector<SweepRow> run_sweep(const RunConfig& cfg) {
  if (cfg.sweep_depths.empty() || cfg.sweep_degrees.empty() || cfg.sweep_samples.empty()) {
    throw ConfigError("sweep needs nonempty sweep_d, sweep_k and sweep_m");
  }
  if (cfg.sweep_estimate && cfg.sweep_budget_product) {
    throw ConfigError("sweep_estimate needs canonical budgets; drop sweep_Mprod");
  }
  for (std::size_t d : cfg.sweep_depths) {
    if (d == 0) throw ConfigError("field 'sweep_d': depths must be >= 1");
  }
  for (int k : cfg.sweep_degrees) {
    if (k < 2) throw ConfigError("field 'sweep_k': degrees must be >= 2");
  }
  for (std::size_t m : cfg.sweep_samples) {
    if (m < 2) throw ConfigError("field 'sweep_m': sample sizes must be >= 2");
  }

  std::vector<SweepRow> rows;
  std::size_t cell = 0;
  for (int k : cfg.sweep_degrees) {
    for (std::size_t m : cfg.sweep_samples) {
      const double md = static_cast<double>(m);
      const auto xs = sample_inputs(m, cfg.spec.dims.front(), cfg.spec.p, cfg.spec.input_radius,
                                    derive_seed(cfg.seed, m));
      for (std::size_t d : cfg.sweep_depths) {
        const ClassSpec spec = sweep_class(cfg, d, k);
        SweepRow row;
        row.d = d;
        row.k = k;
        row.m = m;
        row.radius = spec.input_radius;
        row.mprod = cfg.sweep_budget_product.value_or(spec.budget_product());
        row.gamma = cfg.sweep_gamma ? *cfg.sweep_gamma
                                    : (cfg.spec.gamma ? *cfg.spec.gamma : std::min(1.0, row.mprod));
        const double dd = static_cast<double>(d);
        row.depth_dependent = depth_dependent_bound(row.mprod, d, xs, spec.p).value;
        const auto indep = depth_independent_bound(row.radius, row.mprod, row.gamma, cfg.gamma_loss, md, dd,
                                                   cfg.constant_c);
        row.log_branch = indep.inputs.at("log_branch");
        row.sqrt_branch = indep.inputs.at("sqrt_branch");
        row.depth_independent = indep.value;
        row.prior_exponential = row.radius * std::ldexp(row.mprod, static_cast<int>(d)) / std::sqrt(md);
        row.prior_spectral = prior_bound_spectral(row.radius, std::array{row.mprod}, dd, md);
        row.prior_spectral_cuberoot_depth = prior_bound_spectral(row.radius, std::array{row.mprod}, std::cbrt(md), md);
        if (cfg.sweep_estimate) {
          OptimizerConfig opt = cfg.optimizer;
          opt.seed = derive_seed(cfg.seed, 0x5A00 + cell);
          const auto est = estimate(spec, xs, cfg.draws, opt);
          row.estimate_mean = est.mean;
          row.estimate_stderr = est.standard_error;
        }
        rows.push_back(row);
        ++cell;
      }
    }
  }
  return rows;
}

inline CsvTable sweep_csv(const std::vector<SweepRow>& rows) {
  CsvTable t;
  t.header = kSweepHeader;
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rows) {
    t.rows.push_back(detail::csv_row(
        std::to_string(r.d), std::to_string(r.k), std::to_string(r.m), format_double(r.radius),
        format_double(r.mprod), format_double(r.gamma), format_double(r.depth_dependent), format_double(r.log_branch),
        format_double(r.sqrt_branch), format_double(r.depth_independent), format_double(r.prior_exponential),
        format_double(r.prior_spectral), format_double(r.prior_spectral_cuberoot_depth), opt(r.estimate_mean),
        opt(r.estimate_stderr)));
  }
  return t;
}

// Post-hoc assertions over a sweep, grouped by (k, m) in increasing d:
//  - depth_independent = c B M / gamma * min(log_branch, sqrt_branch) per row;
//  - sqrt_branch strictly increasing in d;
//  - with a fixed product, depth_independent constant once the log branch wins;
//  - estimate mean - 3 stderr <= depth_dependent wherever an estimate exists.
// Returns one message per violation.
inline std::vector<std::string> check_sweep(const std::vector<SweepRow>& rows, const RunConfig& cfg) {
  std::vector<std::string> problems;
  auto where = [](const SweepRow& r) {
    return "d=" + std::to_string(r.d) + " k=" + std::to_string(r.k) + " m=" + std::to_string(r.m);
  };
  for (const auto& r : rows) {
    const double expect = cfg.constant_c * r.radius * r.mprod / cfg.gamma_loss * std::min(r.log_branch, r.sqrt_branch);
    if (std::abs(expect - r.depth_independent) > 1e-12 * std::max(1.0, std::abs(expect))) {
      problems.push_back(where(r) + ": depth_independent is not the min of its branches");
    }
    if (r.estimate_mean && *r.estimate_mean - 3.0 * r.estimate_stderr.value_or(0.0) > r.depth_dependent) {
      problems.push_back(where(r) + ": estimate exceeds the depth-dependent bound");
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      const auto& a = rows[i];
      const auto& b = rows[j];
      if (a.k != b.k || a.m != b.m || a.d >= b.d) continue;
      if (!(a.sqrt_branch < b.sqrt_branch)) problems.push_back(where(b) + ": sqrt branch not increasing in d");
      if (cfg.sweep_budget_product && a.log_branch <= a.sqrt_branch && a.depth_independent != b.depth_independent) {
        problems.push_back(where(b) + ": depth_independent changes after the crossover");
      }
    }
  }
  return problems;
}

inline CsvTable cmd_curve(int kmax) {
  if (kmax < 2) throw ConfigError("kmax must be >= 2 (activation degree k >= 2)");
  CsvTable t;
  t.header = "k,threshold";
  for (int k = 2; k <= kmax; ++k) t.rows.push_back(std::to_string(k) + "," + format_double(constraint_threshold(k)));
  return t;
}

}  // namespace polyrad::cli
